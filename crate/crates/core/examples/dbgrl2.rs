//! debug: instrumented RL training loop.
use asklearn::kb::{generate_kb, KbGenConfig, Split, TaskId, question_templates};
use asklearn::memnet::{MemConfig, Tokenizer};
use asklearn::numerics::{fnv1a, RngStream};
use asklearn::train_rl::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(6);
    let eps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(500);
    let cost: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(16);
    let kb = generate_kb(&KbGenConfig::default()).unwrap();
    let templates = question_templates();
    let tok = Tokenizer::new(&kb);
    let cfg = RLConfig {
        mem: MemConfig { context_window: 1, ..Default::default() },
        episodes_per_epoch: eps,
        epochs,
        repeats: 1,
        dev_episodes: 200,
        seed: 3,
        ..Default::default()
    };
    let table = RewardTable::new(cost).unwrap();
    let scenario = RLScenario { kind: ScenarioKind::Good, task: TaskId::new(task).unwrap() };
    let seed = cfg.seed;
    let mut policies = PolicyPair::new(&kb, cfg.mem, seed);
    let mut rollouts = 0usize;
    let mut branch_means = BranchMeans::new(0.02);
    for epoch in 0..cfg.epochs {
        let stage1 = epoch < cfg.epochs / 2;
        let mut pending = 0usize;
        let (mut hits, mut asks, mut rsum, mut bsum) = (0usize, 0usize, 0.0, 0.0);
        for i in 0..cfg.episodes_per_epoch {
            let mut rng = RngStream::new(seed, fnv1a(b"rl-rollout") ^ ((epoch as u64) << 32 | i as u64));
            let force = stage1.then_some(i % 2 == 0);
            let traj = run_rl_episode(&policies, scenario, &table, &kb, &tok, &templates, Split::Train, Mode::Sample, force, &mut rng).unwrap();
            hits += traj.correct as usize;
            asks += traj.asked as usize;
            rsum += traj.reward;
            let (b, _) = baseline_update(&traj, &mut policies.baseline, cfg.lr, cfg.clip).unwrap();
            bsum += b;
            let ab = branch_means.value(traj.asked);
            branch_means.observe(traj.asked, traj.reward);
            rollouts += 1;
            if rollouts <= cfg.baseline_warmup {
                continue;
            }
            reinforce_update(&traj, &mut policies, b, ab, !stage1, 1.0 / cfg.batch as f64).unwrap();
            pending += 1;
            if pending == cfg.batch {
                policies.question.params.sgd_step(cfg.lr, cfg.clip).unwrap();
                policies.answer_aq.params.sgd_step(cfg.lr, cfg.clip).unwrap();
                policies.answer_qa.params.sgd_step(cfg.lr, cfg.clip).unwrap();
                pending = 0;
            }
        }
        let n = cfg.episodes_per_epoch as f64;
        let dev = evaluate_rl(&policies, scenario, &table, &kb, Split::Dev, 200, 42).unwrap();
        println!(
            "epoch {epoch:2} stage{} train: acc {:.3} ask {:.3} r {:+.3} b {:+.3} | dev greedy: acc {:.3} ask {:.3} r {:+.3}",
            if stage1 { 1 } else { 2 },
            hits as f64 / n, asks as f64 / n, rsum / n, bsum / n,
            dev.accuracy, dev.ask_rate, dev.mean_reward
        );
    }
}
