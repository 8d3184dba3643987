use std::path::PathBuf;

use ganvo_core::gradcheck;
use ganvo_core::{Error, Result};

use crate::args::GradcheckArgs;
use crate::manifest::with_manifest;

pub fn run(args: GradcheckArgs) -> Result<()> {
    let seed = args.output.seed.unwrap_or(0);
    let out = args
        .output
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs/gradcheck"));
    with_manifest("gradcheck", &out, None, seed, || {
        let start = std::time::Instant::now();
        let report = gradcheck::run(seed, args.inject_fault)?;
        print!("{report}");
        let path = out.join("gradcheck.txt");
        std::fs::write(&path, report.to_string()).map_err(|e| Error::io(&path, e))?;
        let failed = report.rows.iter().filter(|r| !r.passed()).count();
        println!(
            "{} checks, {failed} failed, {:.1} s",
            report.rows.len(),
            start.elapsed().as_secs_f64()
        );
        if failed > 0 {
            return Err(Error::Numeric(format!("{failed} gradient checks failed")));
        }
        Ok(())
    })
}
