use dialog_core::sim::{run_dialog, sample_scenario, SimConfig};
use dialog_core::suite::{fixtures_root, TaskSuite};

fn main() {
    let suite = TaskSuite::load(&fixtures_root()).unwrap();
    let mut failures = 0;
    let mut total = 0;
    for seed in [0u64, 7, 42, 99, 1234, 777, 31415, 8, 9, 10] {
        let config = SimConfig { seed, ..SimConfig::default() };
        for i in 0..500u64 {
            total += 1;
            let spec = sample_scenario(&suite, &config, i);
            if let Err(e) = run_dialog(&suite, &spec, i as i64) {
                failures += 1;
                if failures <= 5 {
                    println!("seed {seed} idx {i}: {e}; tasks={:?} perts={:?}", spec.tasks, spec.perturbations);
                }
            }
        }
    }
    println!("failures: {failures} / {total}");
}
