//! Command-line entry point: corpus generation, offline and online training,
//! the evaluation matrix, RL cost sweeps, episode inspection with attention
//! overlays, and a manual teaching session, all under one flat key=value
//! configuration system.
//!
//! Every command reads an optional `--config <path>` file of `key=value`
//! lines; command-line flags (`--key value`) override file values, unknown
//! keys are rejected, and commands with an output directory echo the
//! effective configuration there as a config file that reproduces the run.
//! `ASKLEARN_SEED` supplies the seed when neither a flag nor the file does.
//! Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.

use crate::eval::{
    eval_matrix, predict_from_input, rl_sweep, sweep_csv_rows, test_corpora, EvalError,
    CSV_HEADER, SWEEP_CSV_HEADER,
};
use crate::kb::{
    generate_kb, parse_kb, KbError, KbGenConfig, KnowledgeBase, Split, TaskId,
};
use crate::memnet::{episode_text, MemConfig, Model, ModelError, Tokenizer};
use crate::simulator::{
    generate_dataset, parse_corpus, write_corpus, Corpus, DatasetSpec, DialogueLine,
    Episode, Regime, SimError, StudentScript,
};
use crate::train_offline::{
    ledger, select_best, train_question_asker, train_rbi, train_rbi_fp, TrainConfig,
    TrainError, TrainRun,
};
use crate::train_rl::{
    train_rl, RLConfig, RLScenario, RlError, ScenarioKind,
};
use clap::{Arg, ArgMatches, Command};
use indexmap::IndexMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// One configuration key: its flag name, help text, and default. `None`
/// means the key is required; `Some("")` means optional with no value.
struct Key {
    name: &'static str,
    help: &'static str,
    default: Option<&'static str>,
}

const fn key(name: &'static str, help: &'static str, default: Option<&'static str>) -> Key {
    Key { name, help, default }
}

const fn k_kb() -> Key {
    key("kb", "knowledge-base file; empty generates one", Some(""))
}

const fn k_movies() -> Key {
    key("movies", "generated KB size in movies", Some("200"))
}

const fn k_people() -> Key {
    key("people", "minimum people in the generated KB", Some("150"))
}

const fn k_kb_seed() -> Key {
    key("kb_seed", "generator seed for the KB", Some("0"))
}

const fn k_task() -> Key {
    key("task", "task number, 1-9", None)
}

const fn k_seed() -> Key {
    key("seed", "run seed (ASKLEARN_SEED supplies a default)", Some("0"))
}

const fn k_out() -> Key {
    key("out", "output directory", None)
}

struct CommandSpec {
    name: &'static str,
    about: &'static str,
    keys: &'static [Key],
}

const GEN_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    k_task(),
    key("regime", "dialogue regime: QA, AQ or Mix", Some("QA")),
    key("split", "split: train, dev or test", Some("train")),
    key("n", "number of episodes", Some("2000")),
    k_seed(),
    k_out(),
];

const TRAIN_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    k_task(),
    key("regime", "training regime: QA, AQ or Mix", Some("AQ")),
    key("model", "learner: rbi, rbi+fp or asker", Some("rbi")),
    key("train_corpus", "training corpus file; empty generates one", Some("")),
    key("dev_corpus", "dev corpus file; empty generates one", Some("")),
    key("n_train", "generated training episodes", Some("2000")),
    key("n_dev", "generated dev episodes", Some("500")),
    key("dim", "embedding dimension", Some("32")),
    key("hops", "memory hops", Some("3")),
    key("context_window", "word context half-window; 0 = bag of words", Some("1")),
    key("lr", "learning rate", Some("0.05")),
    key("clip", "gradient-norm clip", Some("40")),
    key("batch", "minibatch size", Some("32")),
    key("epochs", "training epochs", Some("20")),
    key("lambda", "forward-prediction loss weight", Some("1.0")),
    key("repeats", "independent restarts; best dev accuracy kept", Some("1")),
    k_seed(),
    k_out(),
];

const TRAIN_RL_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    k_task(),
    key("scenario", "student scenario: good, medium or poor", Some("good")),
    key("cost", "ask cost in [0, 2]", Some("0")),
    key("dim", "embedding dimension", Some("32")),
    key("hops", "memory hops", Some("3")),
    key("context_window", "word context half-window; 0 = bag of words", Some("1")),
    key("lr", "learning rate", Some("0.05")),
    key("clip", "gradient-norm clip", Some("40")),
    key("batch", "rollouts per policy step", Some("16")),
    key("epochs", "total epochs; the first half trains answer policies only", Some("16")),
    key("episodes", "rollouts per epoch", Some("2000")),
    key("repeats", "independent restarts; best dev reward kept", Some("5")),
    key("dev_episodes", "greedy dev rollouts per evaluation", Some("500")),
    key("warmup", "baseline-only rollouts before policy updates", Some("500")),
    k_seed(),
    k_out(),
];

const EVAL_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    k_task(),
    key("model_qa", "checkpoint trained in the QA regime", Some("")),
    key("model_aq", "checkpoint trained in the AQ regime", Some("")),
    key("model_mix", "checkpoint trained in the Mix regime", Some("")),
    key("asker", "question-policy checkpoint for TestModelAQ", Some("")),
    key("model_kind", "model-kind label for the report", Some("cont")),
    key("n_test", "test episodes per cell", Some("1000")),
    k_seed(),
    k_out(),
];

const SWEEP_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    k_task(),
    key("scenario", "student scenario: good, medium or poor", Some("good")),
    key("costs", "comma-separated ask costs", Some("0,0.25,0.5,0.75,1,1.25,1.5,1.75,2")),
    key("dim", "embedding dimension", Some("32")),
    key("hops", "memory hops", Some("3")),
    key("context_window", "word context half-window; 0 = bag of words", Some("1")),
    key("lr", "learning rate", Some("0.05")),
    key("clip", "gradient-norm clip", Some("40")),
    key("batch", "rollouts per policy step", Some("16")),
    key("epochs", "total epochs; the first half trains answer policies only", Some("16")),
    key("episodes", "rollouts per epoch", Some("2000")),
    key("repeats", "independent restarts per cost", Some("5")),
    key("dev_episodes", "greedy dev rollouts per evaluation", Some("500")),
    key("warmup", "baseline-only rollouts before policy updates", Some("500")),
    key("n_test", "greedy test episodes per cost", Some("1000")),
    k_seed(),
    k_out(),
];

const INSPECT_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    key("corpus", "corpus file to inspect", None),
    key("index", "episode index, 0-based", Some("0")),
    key("model", "checkpoint for the attention overlay; empty skips it", Some("")),
];

const TEACH_KEYS: &[Key] = &[
    k_kb(),
    k_movies(),
    k_people(),
    k_kb_seed(),
    k_task(),
    key("model", "answer-policy checkpoint the student plays", None),
    key("ask", "1 lets the student ask its task question first", Some("1")),
    key("out_corpus", "corpus file the transcript is appended to", None),
];

const COMMANDS: &[CommandSpec] = &[
    CommandSpec { name: "gen", about: "Generate a dialogue corpus", keys: GEN_KEYS },
    CommandSpec {
        name: "train",
        about: "Train an answer model or question asker offline",
        keys: TRAIN_KEYS,
    },
    CommandSpec {
        name: "train-rl",
        about: "Train the online ask/answer policies by reinforcement",
        keys: TRAIN_RL_KEYS,
    },
    CommandSpec {
        name: "eval",
        about: "Fill the train-regime x test-regime accuracy matrix",
        keys: EVAL_KEYS,
    },
    CommandSpec {
        name: "sweep",
        about: "Train and evaluate RL policies across an ask-cost grid",
        keys: SWEEP_KEYS,
    },
    CommandSpec {
        name: "inspect",
        about: "Pretty-print an episode, optionally with attention weights",
        keys: INSPECT_KEYS,
    },
    CommandSpec {
        name: "teach",
        about: "Play the teacher against a trained student in the terminal",
        keys: TEACH_KEYS,
    },
];

fn build_command() -> Command {
    let mut root = Command::new("asklearn")
        .about("Dialogue tasks over a movie KB: students that learn by asking")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .disable_version_flag(true);
    for spec in COMMANDS {
        let mut cmd = Command::new(spec.name).about(spec.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("key=value config file; flags override its values"),
        );
        for k in spec.keys {
            cmd = cmd.arg(Arg::new(k.name).long(k.name).value_name("VALUE").help(k.help));
        }
        root = root.subcommand(cmd);
    }
    root
}

type Cfg = IndexMap<&'static str, String>;

/// Merge precedence: flag > config file > ASKLEARN_SEED (seed only) >
/// default. Missing required keys and unknown file keys are usage errors.
fn resolve(matches: &ArgMatches, keys: &'static [Key]) -> Result<Cfg, CliError> {
    let mut file_values: IndexMap<String, String> = IndexMap::new();
    if let Some(path) = matches.get_one::<String>("config") {
        let text = read_file(Path::new(path))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                usage(format!("{path}:{}: expected key=value, got `{line}`", i + 1))
            })?;
            let k = k.trim();
            if !keys.iter().any(|key| key.name == k) {
                return Err(usage(format!("{path}:{}: unknown key `{k}`", i + 1)));
            }
            file_values.insert(k.to_string(), v.trim().to_string());
        }
    }
    let mut cfg = Cfg::new();
    for k in keys {
        let value = matches
            .get_one::<String>(k.name)
            .cloned()
            .or_else(|| file_values.get(k.name).cloned())
            .or_else(|| {
                (k.name == "seed").then(|| std::env::var("ASKLEARN_SEED").ok()).flatten()
            })
            .or_else(|| k.default.map(String::from))
            .ok_or_else(|| usage(format!("missing required key `--{}`", k.name)))?;
        cfg.insert(k.name, value);
    }
    Ok(cfg)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn out_dir(cfg: &Cfg) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg["out"]);
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    Ok(dir)
}

/// Echo the effective configuration; the file is itself a valid `--config`
/// input reproducing the run.
fn echo_config(dir: &Path, command: &str, cfg: &Cfg) -> Result<(), CliError> {
    let mut text = format!("# asklearn {command}\n");
    for (k, v) in cfg {
        let _ = writeln!(text, "{k}={v}");
    }
    write_file(&dir.join("config.txt"), &text)
}

fn parse_num<T: std::str::FromStr>(cfg: &Cfg, key: &str) -> Result<T, CliError> {
    cfg[key]
        .parse()
        .map_err(|_| usage(format!("--{key}: cannot parse `{}`", cfg[key])))
}

fn parse_task(cfg: &Cfg) -> Result<TaskId, CliError> {
    let n: u8 = parse_num(cfg, "task")?;
    TaskId::new(n).ok_or_else(|| usage(format!("--task: {n} is outside 1-9")))
}

fn parse_regime(cfg: &Cfg) -> Result<Regime, CliError> {
    Regime::parse(&cfg["regime"])
        .ok_or_else(|| usage(format!("--regime: `{}` is not QA, AQ or Mix", cfg["regime"])))
}

fn parse_split(cfg: &Cfg) -> Result<Split, CliError> {
    Split::parse(&cfg["split"])
        .ok_or_else(|| usage(format!("--split: `{}` is not train, dev or test", cfg["split"])))
}

fn parse_scenario(cfg: &Cfg) -> Result<ScenarioKind, CliError> {
    ScenarioKind::parse(&cfg["scenario"])
        .map_err(|_| usage(format!("--scenario: `{}` is not good, medium or poor", cfg["scenario"])))
}

fn mem_config(cfg: &Cfg) -> Result<MemConfig, CliError> {
    Ok(MemConfig {
        dim: parse_num(cfg, "dim")?,
        hops: parse_num(cfg, "hops")?,
        context_window: parse_num(cfg, "context_window")?,
        ..Default::default()
    })
}

fn load_kb(cfg: &Cfg) -> Result<KnowledgeBase, CliError> {
    if cfg["kb"].is_empty() {
        Ok(generate_kb(&KbGenConfig {
            n_movies: parse_num(cfg, "movies")?,
            n_people: parse_num(cfg, "people")?,
            seed: parse_num(cfg, "kb_seed")?,
        })?)
    } else {
        Ok(parse_kb(&read_file(Path::new(&cfg["kb"]))?)?)
    }
}

fn load_model(path: &str) -> Result<Model, CliError> {
    Ok(Model::load(&read_file(Path::new(path))?)?)
}

pub fn dispatch(args: &[String]) -> i32 {
    let mut argv = vec!["asklearn".to_string()];
    argv.extend(args.iter().cloned());
    let matches = match build_command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let spec = COMMANDS.iter().find(|c| c.name == name).expect("known subcommand");
    let result = resolve(sub, spec.keys).and_then(|cfg| match name {
        "gen" => cmd_gen(&cfg),
        "train" => cmd_train(&cfg),
        "train-rl" => cmd_train_rl(&cfg),
        "eval" => cmd_eval(&cfg),
        "sweep" => cmd_sweep(&cfg),
        "inspect" => cmd_inspect(&cfg),
        "teach" => cmd_teach(&cfg),
        _ => unreachable!(),
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_gen(cfg: &Cfg) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let task = parse_task(cfg)?;
    let regime = parse_regime(cfg)?;
    let split = parse_split(cfg)?;
    let spec = DatasetSpec {
        task,
        regime,
        split,
        n_episodes: parse_num(cfg, "n")?,
        seed: parse_num(cfg, "seed")?,
        script: StudentScript::perfect(),
    };
    let corpus = generate_dataset(&spec, &kb)?;
    let dir = out_dir(cfg)?;
    let name = format!(
        "task{}_{}_{}.txt",
        task.0,
        regime.name().to_lowercase(),
        split.name()
    );
    write_file(&dir.join(&name), &write_corpus(&corpus))?;
    echo_config(&dir, "gen", cfg)?;
    println!("wrote {}", dir.join(&name).display());
    Ok(())
}

fn load_or_generate(
    cfg: &Cfg,
    path_key: &str,
    n_key: &str,
    split: Split,
    kb: &KnowledgeBase,
) -> Result<Corpus, CliError> {
    if cfg[path_key].is_empty() {
        let spec = DatasetSpec {
            task: parse_task(cfg)?,
            regime: parse_regime(cfg)?,
            split,
            n_episodes: parse_num(cfg, n_key)?,
            seed: parse_num(cfg, "seed")?,
            script: StudentScript::perfect(),
        };
        Ok(generate_dataset(&spec, kb)?)
    } else {
        Ok(parse_corpus(&read_file(Path::new(&cfg[path_key]))?)?)
    }
}

fn cmd_train(cfg: &Cfg) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let train = load_or_generate(cfg, "train_corpus", "n_train", Split::Train, &kb)?;
    let dev = load_or_generate(cfg, "dev_corpus", "n_dev", Split::Dev, &kb)?;
    let base_seed: u64 = parse_num(cfg, "seed")?;
    let repeats: usize = parse_num(cfg, "repeats")?;
    if repeats == 0 {
        return Err(usage("--repeats: must be at least 1"));
    }
    let model = cfg["model"].as_str();
    let dir = out_dir(cfg)?;
    let mut rows: Vec<(TrainRun, String)> = Vec::new();
    for r in 0..repeats {
        let tc = TrainConfig {
            mem: mem_config(cfg)?,
            lr: parse_num(cfg, "lr")?,
            clip: parse_num(cfg, "clip")?,
            batch: parse_num(cfg, "batch")?,
            epochs: parse_num(cfg, "epochs")?,
            lambda_fp: parse_num(cfg, "lambda")?,
            seed: base_seed.wrapping_add(r as u64),
        };
        let run = match model {
            "rbi" => train_rbi(&train, &dev, &kb, &tc)?,
            "rbi+fp" => train_rbi_fp(&train, &dev, &kb, &tc)?,
            "asker" => train_question_asker(&train, &dev, &kb, &tc)?,
            other => {
                return Err(usage(format!("--model: `{other}` is not rbi, rbi+fp or asker")))
            }
        };
        let name = format!("{}_seed{}.model", run.model_kind, run.seed);
        write_file(&dir.join(&name), &run.model.save())?;
        rows.push((run, name));
    }
    write_file(&dir.join("ledger.csv"), &ledger(&rows))?;
    let best = select_best(rows.into_iter().map(|(run, _)| run).collect())?;
    write_file(&dir.join("best.model"), &best.model.save())?;
    echo_config(&dir, "train", cfg)?;
    println!("best dev accuracy {:.4} (seed {})", best.dev_accuracy, best.seed);
    Ok(())
}

fn rl_config(cfg: &Cfg) -> Result<RLConfig, CliError> {
    Ok(RLConfig {
        mem: mem_config(cfg)?,
        lr: parse_num(cfg, "lr")?,
        clip: parse_num(cfg, "clip")?,
        batch: parse_num(cfg, "batch")?,
        epochs: parse_num(cfg, "epochs")?,
        episodes_per_epoch: parse_num(cfg, "episodes")?,
        repeats: parse_num(cfg, "repeats")?,
        dev_episodes: parse_num(cfg, "dev_episodes")?,
        baseline_warmup: parse_num(cfg, "warmup")?,
        seed: parse_num(cfg, "seed")?,
    })
}

pub const RL_LEDGER_HEADER: &str =
    "task,scenario,cost,seed,dev_ask_rate,dev_accuracy,dev_mean_reward";

fn cmd_train_rl(cfg: &Cfg) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let task = parse_task(cfg)?;
    let kind = parse_scenario(cfg)?;
    let cost: f64 = parse_num(cfg, "cost")?;
    let rl = rl_config(cfg)?;
    let run = train_rl(RLScenario { kind, task }, cost, &kb, &rl)?;
    let dir = out_dir(cfg)?;
    let stem = format!("task{}_{}_cost{}", task.0, kind.name(), cfg["cost"]);
    for (suffix, model) in [
        ("question", &run.policies.question),
        ("answer_aq", &run.policies.answer_aq),
        ("answer_qa", &run.policies.answer_qa),
        ("baseline", &run.policies.baseline),
    ] {
        write_file(&dir.join(format!("{stem}.{suffix}.model")), &model.save())?;
    }
    let row = format!(
        "{},{},{},{},{:.4},{:.4},{:.4}",
        task.0,
        kind.name(),
        cfg["cost"],
        run.seed,
        run.dev.ask_rate,
        run.dev.accuracy,
        run.dev.mean_reward
    );
    write_file(&dir.join("rl_ledger.csv"), &format!("{RL_LEDGER_HEADER}\n{row}\n"))?;
    echo_config(&dir, "train-rl", cfg)?;
    println!(
        "dev: ask rate {:.3}, accuracy {:.3}, mean reward {:+.3}",
        run.dev.ask_rate, run.dev.accuracy, run.dev.mean_reward
    );
    Ok(())
}

fn cmd_eval(cfg: &Cfg) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let task = parse_task(cfg)?;
    let seed: u64 = parse_num(cfg, "seed")?;
    let mut models = IndexMap::new();
    for (key, regime) in [
        ("model_qa", Regime::Qa),
        ("model_aq", Regime::Aq),
        ("model_mix", Regime::Mix),
    ] {
        if !cfg[key].is_empty() {
            models.insert(regime, load_model(&cfg[key])?);
        }
    }
    if models.is_empty() {
        return Err(usage("at least one of --model_qa, --model_aq, --model_mix is required"));
    }
    let asker = if cfg["asker"].is_empty() { None } else { Some(load_model(&cfg["asker"])?) };
    let (qa, aq) = test_corpora(task, &kb, parse_num(cfg, "n_test")?, seed)?;
    let report = eval_matrix(
        task,
        &kb,
        &models,
        &qa,
        &aq,
        asker.as_ref(),
        &cfg["model_kind"],
        seed,
    )?;
    let dir = out_dir(cfg)?;
    write_file(&dir.join("report.csv"), &format!("{CSV_HEADER}\n{}", report.csv_rows()))?;
    write_file(&dir.join("report.txt"), &report.render())?;
    echo_config(&dir, "eval", cfg)?;
    print!("{}", report.render());
    Ok(())
}

fn cmd_sweep(cfg: &Cfg) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let task = parse_task(cfg)?;
    let kind = parse_scenario(cfg)?;
    let mut costs = Vec::new();
    for part in cfg["costs"].split(',') {
        let c: f64 = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("--costs: cannot parse `{}`", part.trim())))?;
        costs.push(c);
    }
    if costs.is_empty() {
        return Err(usage("--costs: the grid is empty"));
    }
    let rows = rl_sweep(task, kind, &costs, &kb, &rl_config(cfg)?, parse_num(cfg, "n_test")?)?;
    let dir = out_dir(cfg)?;
    write_file(&dir.join("sweep.csv"), &format!("{SWEEP_CSV_HEADER}\n{}", sweep_csv_rows(&rows)))?;
    echo_config(&dir, "sweep", cfg)?;
    for r in &rows {
        println!(
            "cost {:.2}: ask rate {:.3}, accuracy {:.3}, mean reward {:+.3}",
            r.cost, r.ask_rate, r.accuracy, r.mean_reward
        );
    }
    Ok(())
}

fn cmd_inspect(cfg: &Cfg) -> Result<(), CliError> {
    let corpus = parse_corpus(&read_file(Path::new(&cfg["corpus"]))?)?;
    let index: usize = parse_num(cfg, "index")?;
    let ep = corpus.episodes.get(index).ok_or_else(|| {
        usage(format!("--index: {index} out of range (corpus has {} episodes)", corpus.episodes.len()))
    })?;
    if let Some(meta) = &ep.meta {
        println!(
            "episode {index}: q={} rel={} answers={}",
            meta.question_entity,
            meta.relation,
            meta.answers.join("|")
        );
    } else {
        println!("episode {index}");
    }
    for (i, line) in ep.lines.iter().enumerate() {
        let mut text = format!("{:>3} ", i + 1);
        if line.is_kb {
            text.push_str("kb: ");
        }
        text.push_str(&line.teacher_text);
        if let Some(s) = &line.student_text {
            let _ = write!(text, "  [student: {s}]");
        }
        if let Some(r) = line.reward {
            let _ = write!(text, "  [reward: {r}]");
        }
        println!("{text}");
    }
    if cfg["model"].is_empty() {
        return Ok(());
    }
    let kb = load_kb(cfg)?;
    let model = load_model(&cfg["model"])?;
    let tok = Tokenizer::new(&kb);
    let Some(text) = episode_text(ep, &tok) else {
        println!("(no answer line; attention overlay skipped)");
        return Ok(());
    };
    let input = model.encode_episode(&text.memory_lines, &text.query);
    let trace = model.forward(&input);
    println!("\nattention per hop (memory lines in order):");
    for (i, line) in text.memory_lines.iter().enumerate() {
        let mut row = String::new();
        for ps in &trace.ps {
            let _ = write!(row, " {:>6.3}", ps[i]);
        }
        println!("{row}  {}", line.join(" "));
    }
    match predict_from_input(&model, &input) {
        Some(p) => println!("\nmodel answer: {p}"),
        None => println!("\nmodel answer: (no candidates)"),
    }
    Ok(())
}

/// The fixed clarification the student opens with in a teach session. The
/// verification tasks (2, 4) normally pick between sampled question forms;
/// against a human teacher the student simply echoes the question back.
fn teach_question(task: TaskId, question: &str) -> String {
    match task.0 {
        1 => "What do you mean ?".to_string(),
        2 | 4 => format!("Do you mean {} ?", question.trim_end_matches(" ?")),
        3 => "Can you give me a hint ?".to_string(),
        _ => "I don't know. What's the answer?".to_string(),
    }
}

/// Keep arbitrary human text inside one corpus field: tabs separate fields
/// and a leading `#` marks metadata, so both are softened.
fn sanitize(text: &str) -> String {
    let t = text.replace('\t', " ").trim().trim_start_matches('#').trim().to_string();
    if t.is_empty() {
        ".".to_string()
    } else {
        t
    }
}

fn cmd_teach(cfg: &Cfg) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let task = parse_task(cfg)?;
    let model = load_model(&cfg["model"])?;
    let student_asks = cfg["ask"] == "1";
    let tok = Tokenizer::new(&kb);
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut prompt = |label: &str| -> Result<Option<String>, CliError> {
        print!("{label}");
        std::io::stdout().flush().ok();
        let mut buf = String::new();
        let n = input
            .read_line(&mut buf)
            .map_err(|source| CliError::Io { path: PathBuf::from("<stdin>"), source })?;
        Ok((n > 0).then(|| buf.trim_end_matches(['\n', '\r']).to_string()))
    };
    let mut episodes: Vec<Episode> = Vec::new();
    loop {
        let Some(question) = prompt("teacher question (empty to finish)> ")? else { break };
        let question = sanitize(&question);
        if question == "." {
            break;
        }
        let mut lines: Vec<DialogueLine> = Vec::new();
        for entity in kb.entities() {
            if question.contains(&entity.surface) {
                for fact in kb.facts_mentioning(entity.id) {
                    let text = kb.fact_text(fact);
                    if !lines.iter().any(|l| l.teacher_text == text) {
                        lines.push(DialogueLine::kb(text));
                    }
                }
            }
        }
        if student_asks {
            let asked = teach_question(task, &question);
            println!("student: {asked}");
            let reply = prompt("teacher reply> ")?.unwrap_or_default();
            lines.push(DialogueLine::exchange(question.clone(), asked));
            let reply = reply.trim();
            if !reply.is_empty() {
                lines.push(DialogueLine::teacher(sanitize(reply)));
            }
        }
        let memory_lines: Vec<Vec<String>> = lines
            .iter()
            .map(|l| {
                let mut t = tok.tokenize(&l.teacher_text);
                if let Some(s) = &l.student_text {
                    t.extend(tok.tokenize(s));
                }
                t
            })
            .collect();
        let query = tok.tokenize(&question);
        let enc = model.encode_episode(&memory_lines, &query);
        let answer = predict_from_input(&model, &enc).unwrap_or_else(|| "unknown".to_string());
        println!("student: {answer}");
        let feedback = prompt("teacher feedback> ")?.unwrap_or_default();
        let reward = loop {
            match prompt("reward (0 or 1)> ")? {
                None => break 0,
                Some(s) => match s.trim() {
                    "0" => break 0,
                    "1" => break 1,
                    _ => println!("please type 0 or 1"),
                },
            }
        };
        lines.push(DialogueLine::answer(question, answer, reward));
        let feedback = feedback.trim();
        if !feedback.is_empty() {
            lines.push(DialogueLine::teacher(sanitize(feedback)));
        }
        episodes.push(Episode { task: Some(task), lines, meta: None });
    }
    if episodes.is_empty() {
        println!("no episodes recorded");
        return Ok(());
    }
    let text = write_corpus(&Corpus { header: None, episodes });
    let path = PathBuf::from(&cfg["out_corpus"]);
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|source| CliError::Io { path: path.clone(), source })?;
    file.write_all(text.as_bytes())
        .map_err(|source| CliError::Io { path: path.clone(), source })?;
    println!("appended transcript to {}", path.display());
    Ok(())
}

