// Scratch experiment binary (not part of the shipped surface): measures
// expression-search robustness across seeds on one dataset target.
use cibsysid::dsr::{train_on_dataset, DsrConfig};
use cibsysid::metrics;
use cibsysid::plant::Params;
use cibsysid::simulator::{simulate, SimConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let target_idx: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(8);
    let entropy: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.005);
    let n_seeds: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(4);

    let params = Params::default();
    let ds = simulate(&SimConfig::default(), &params).unwrap();
    let vars_full = ds.var_matrix();
    let mut hits = 0;
    for seed in 0..n_seeds {
        let cfg = DsrConfig {
            seed,
            entropy_weight: entropy,
            ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let out = train_on_dataset(&ds, target_idx, &cfg).unwrap();
        let (pred, _) = out.best.expression.eval_lenient(&vars_full);
        let r2 = metrics::r2(&pred, &ds.target(target_idx)).unwrap();
        let ok = r2 >= 0.99;
        hits += i32::from(ok);
        println!(
            "target {target_idx} ent {entropy} seed {seed}: R2 {r2:.5} reward {:.5} rounds {} in {:.0?} {}",
            out.best.reward,
            out.reward_trace.len(),
            t0.elapsed(),
            if ok { "OK" } else { "MISS" }
        );
    }
    println!("hits: {hits}/{n_seeds}");
}
