//! debug: RL trend probe (ask rate / accuracy vs cost).
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId};
use asklearn::memnet::MemConfig;
use asklearn::train_rl::{
    evaluate_rl, train_rl, RLConfig, RLScenario, RewardTable, ScenarioKind,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(6);
    let eps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(300);
    let repeats: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let cfg = RLConfig {
        mem: MemConfig { context_window: 1, ..Default::default() },
        episodes_per_epoch: eps,
        epochs: 24,
        repeats,
        dev_episodes: 200,
        seed: 3,
        ..Default::default()
    };
    for kind in [ScenarioKind::Good, ScenarioKind::Poor] {
        for step in [0, 2, 4, 6, 8] {
            let cost = step as f64 * 0.25;
            let scenario = RLScenario { kind, task: TaskId::new(task).unwrap() };
            let t0 = std::time::Instant::now();
            let run = train_rl(scenario, cost, &kb, &cfg).unwrap();
            let table = RewardTable::new(cost).unwrap();
            let ev = evaluate_rl(&run.policies, scenario, &table, &kb, Split::Test, 1000, 5)
                .unwrap();
            println!(
                "task {task} {} cost {cost:.2}: ask {:.3} acc {:.3} reward {:+.3}  ({:.1?})",
                kind.name(),
                ev.ask_rate,
                ev.accuracy,
                ev.mean_reward,
                t0.elapsed()
            );
        }
    }
}
