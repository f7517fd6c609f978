//! One line per acceptance criterion. Runs without the libtest harness so
//! the lines always reach stdout; exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use clap::Parser;
use conelab::config::Cli;
use conelab::suite::{self, CriterionReport};

const SEED: u64 = 0;

fn timed(
    f: impl FnOnce() -> Result<CriterionReport, conelab::error::CliError>,
    budget: Option<Duration>,
) -> (CriterionReport, Option<(Duration, Duration)>) {
    let start = Instant::now();
    let report = f().expect("criterion runs");
    (report, budget.map(|b| (start.elapsed(), b)))
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().expect("temp dir");
    let paths = [dir.path().join("a.json"), dir.path().join("b.json")];
    for p in &paths {
        let cli = Cli::parse_from(["conelab", "suite", "--seed", "0", "--out", p.to_str().expect("utf-8 path")]);
        let config = cli.into_config().expect("valid config");
        let outcome = conelab::commands::run(&config).expect("suite runs");
        outcome.write(&config, config.out.as_ref().expect("out path")).expect("suite output written");
    }
    let (a, b) = (std::fs::read(&paths[0]).expect("first output"), std::fs::read(&paths[1]).expect("second output"));
    (a == b && !a.is_empty(), format!("{} bytes vs {} bytes", a.len(), b.len()))
}

fn main() {
    let runs = [
        timed(suite::criterion_1, Some(Duration::from_secs(1))),
        timed(suite::criterion_2, None),
        timed(suite::criterion_3, None),
        timed(suite::criterion_4, None),
        timed(|| suite::criterion_5(SEED), None),
        timed(|| suite::criterion_6(SEED), None),
        timed(|| suite::criterion_7(SEED), None),
        timed(suite::criterion_8, Some(Duration::from_secs(10))),
        timed(|| suite::criterion_9(SEED), Some(Duration::from_secs(120))),
    ];
    let mut all = true;
    for (report, timing) in &runs {
        let mut ok = report.passed();
        let mut line = report.line();
        if let Some((took, budget)) = timing {
            let in_time = took <= budget;
            if !in_time {
                ok = false;
                line = line.replacen(" PASS ", " FAIL ", 1);
            }
            line += &format!(" (runtime {:.1} ms, budget {} s)", took.as_secs_f64() * 1e3, budget.as_secs());
        }
        for c in report.checks.iter().filter(|c| !c.passed) {
            line += &format!("\n    {}: {} not {}", c.label, c.value, c.bound);
        }
        all &= ok;
        println!("{line}");
    }
    let (same, detail) = determinism();
    all &= same;
    println!("criterion 10 {} byte-identical suite output [{detail}]", if same { "PASS" } else { "FAIL" });
    if !all {
        std::process::exit(1);
    }
}
