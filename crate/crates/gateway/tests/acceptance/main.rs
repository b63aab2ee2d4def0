//! Acceptance gate: runs every criterion in sequence and prints one
//! PASS/FAIL line each. Exits non-zero if any criterion fails.

#[path = "../common/mod.rs"]
mod common;

mod discovery;
mod isolation;
mod lifecycle;
mod llm;
mod naive;
mod service;
mod stall;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use tokio::runtime::Runtime;

type Criterion = fn(&Runtime) -> String;

const CRITERIA: [(u32, &str, Criterion); 10] = [
    (1, "route semantics", routes::run),
    (2, "context isolation under concurrency", isolation::run),
    (3, "lifecycle soundness", lifecycle::run),
    (4, "contract enforcement", contracts::run),
    (5, "EXT discovery", discovery::run),
    (6, "analytics oracle equivalence", analytics::run),
    (7, "mining fidelity", mining::run),
    (8, "stall mechanism", stall::run),
    (9, "end-to-end service", service::run),
    (10, "LLM executor contract", llm::run),
];

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".to_string())
}

fn main() {
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .expect("runtime");
    let mut failed = 0;
    for (n, name, f) in CRITERIA {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| f(&rt)));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {n:>2}. {name} ({secs:.2}s): {detail}"),
            Err(p) => {
                failed += 1;
                println!(
                    "FAIL  {n:>2}. {name} ({secs:.2}s): {}",
                    panic_text(p.as_ref())
                );
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
