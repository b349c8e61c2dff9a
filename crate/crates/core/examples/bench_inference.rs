//! Whole-frame inference against patch inference across resolutions.
//!
//! cargo run --release --example bench_inference

use patchex::metrics::stage_table;
use patchex::pipeline::{run_bench, Models, PipelineConfig};

fn main() -> patchex::Result<()> {
    let out = std::env::temp_dir().join("patchex_bench");
    let res = [(160, 90), (320, 180), (480, 270)];
    let rep = run_bench(&res, &Models::fresh(0)?, &PipelineConfig::default(), 5, &out)?;
    for r in &rep.rows {
        println!(
            "{}x{}: whole frame {:.1} ms, patches {:.2} ms",
            r.width, r.height, r.whole_frame_ms, r.patch_parallel_ms
        );
    }
    if let Some(f) = rep.fit {
        println!("latency ~ {:.3e} * pixels^{:.3} (r2 {:.3})", f.a, f.b, f.r2);
    }
    print!("{}", stage_table(&rep.rows[rep.rows.len() - 1].stages));
    Ok(())
}
