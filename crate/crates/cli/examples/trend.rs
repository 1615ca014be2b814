use fan_cli::experiment::{run_seed, verdicts, TrendConfig};

fn main() {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().expect("seed")).collect();
    let cfg = TrendConfig::default();
    let mut results = Vec::new();
    for seed in if seeds.is_empty() { vec![1, 2, 3] } else { seeds } {
        let dir = std::env::temp_dir().join(format!("fan-trend-{seed}"));
        let r = run_seed(&cfg, seed, &dir).expect("trend run");
        println!("seed {seed} ({:.0} s)", r.seconds);
        for s in &r.scores {
            println!(
                "  {:<12} test {:.3} playback {:.3} dev {:.3}",
                s.tag, s.accuracy, s.playback_accuracy, s.dev_accuracy
            );
        }
        results.push(r);
    }
    for v in verdicts(&results) {
        println!(
            "{}: {}/{} -> {}",
            v.name,
            v.agreeing_seeds,
            v.seeds,
            if v.holds() { "holds" } else { "violated" }
        );
    }
}
