use std::collections::BTreeSet;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use sdp::aggregate::AggregationMode;
use sdp::agent::run_episode;
use sdp::bench::{run_comparison, GenerativeModel};
use sdp::decision::DecisionClass;
use sdp::kb::TheoryId;
use sdp::lang::{parse, parse_proposition, Document};
use sdp::service::{serve, AppState};
use sdp::session::{goal_report, Session, SessionError};

#[derive(Parser)]
#[command(name = "sdp", version, about = "Symbolic decision procedures over argument-based knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report parse and semantic errors in a document.
    Check { path: PathBuf },
    /// Print the arguments for a goal and its aggregated status.
    Argue {
        kb: PathBuf,
        goal: String,
        /// Comma-separated theory ids; defaults to every theory.
        #[arg(long, value_delimiter = ',')]
        theories: Option<Vec<String>>,
        #[arg(long)]
        json: bool,
    },
    /// Raise every decision whose prototype holds and report its state.
    Decide {
        kb: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the document's scenario and write the trace as JSON lines.
    Agent {
        kb: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_steps: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the rule arm against naive Bayes on sampled patients.
    Bench {
        model: PathBuf,
        kb: PathBuf,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Decision class to run; required when the document declares several.
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Serve the session API.
    Serve {
        kb: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

enum Failure {
    Domain(String),
    Usage(String),
    /// Diagnostics already printed.
    Reported,
}

type Outcome = Result<(), Failure>;

fn color() -> bool {
    std::env::var("SDP_COLOR").map_or(true, |v| v != "0") && std::io::stderr().is_terminal()
}

fn error_label() -> &'static str {
    if color() {
        "\x1b[1;31merror\x1b[0m"
    } else {
        "error"
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Document, Failure> {
    let text = read(path)?;
    parse(&text).map_err(|errors| {
        for e in errors {
            eprintln!("{}:{}:{}: {}: {}", path.display(), e.line, e.col, error_label(), e.message);
        }
        Failure::Reported
    })
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Domain(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check(path: &Path) -> Outcome {
    load(path).map(|_| ())
}

fn argue(path: &Path, goal: &str, theories: Option<Vec<String>>, as_json: bool) -> Outcome {
    let goal = parse_proposition(goal).map_err(|e| Failure::Usage(format!("goal: {e}")))?;
    let doc = load(path)?;
    let active: BTreeSet<TheoryId> = match theories {
        Some(ids) => {
            let ids: BTreeSet<TheoryId> = ids.iter().map(|t| TheoryId::new(t.trim())).collect();
            if let Some(missing) = ids.iter().find(|t| !doc.kb.has_theory(t)) {
                return Err(Failure::Domain(format!("unknown theory `{}`", missing.as_str())));
            }
            ids
        }
        None => doc.kb.theory_ids(),
    };
    let report = goal_report(&doc.kb, &goal, &active, AggregationMode::default()).map_err(|e| Failure::Domain(e.to_string()))?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&report).expect("json"));
        return Ok(());
    }
    if report.results.iter().all(|r| r.arguments.is_empty()) {
        println!("{goal}: conceivable, no arguments");
        return Ok(());
    }
    for r in &report.results {
        println!("{}: {}", r.proposition, r.status.display.keyword());
        for a in &r.arguments {
            println!(
                "  {:<10} facts: {}  rules: {}  theories: {}",
                a.sign,
                list(&a.grounds.facts),
                list(&a.grounds.rules),
                list(&a.grounds.theories)
            );
        }
    }
    Ok(())
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "-".to_string()
    } else {
        items.join(", ")
    }
}

fn decide(path: &Path, as_json: bool) -> Outcome {
    let doc = load(path)?;
    let mut session = Session::new("batch", doc.kb, doc.classes, 0).map_err(|e| Failure::Domain(e.to_string()))?;
    let ids: Vec<String> = session.decisions.iter().map(|d| d.id.clone()).collect();
    let mut out = Vec::new();
    for id in &ids {
        let question = session.next_question(id).map_err(|e| Failure::Domain(e.to_string()))?;
        let commit = match session.commit(id, 0) {
            Ok(c) => json!({ "committed": c.option }),
            Err(e @ (SessionError::NotConfirmed | SessionError::NoCandidates | SessionError::Tie(_))) => {
                json!({ "refused": e.code(), "message": e.to_string() })
            }
            Err(e) => return Err(Failure::Domain(e.to_string())),
        };
        let options = session.options(id).map_err(|e| Failure::Domain(e.to_string()))?;
        out.push((options, question.question, commit));
    }
    if as_json {
        let items: Vec<_> = out
            .iter()
            .map(|(options, question, commit)| json!({ "options": options, "next_question": question, "outcome": commit }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&items).expect("json"));
        return Ok(());
    }
    if out.is_empty() {
        println!("no decision prototypes hold");
    }
    for (options, question, commit) in &out {
        println!("{} {} [{}]", options.decision, options.class, options.state);
        for c in &options.candidates {
            let mark = if c.proposed { "*" } else { " " };
            println!("  {mark} {:<30} {:<12} pros {} cons {}", c.option, c.status.display.keyword(), c.pros, c.cons);
        }
        if let Some(q) = question {
            println!("  next question: {q}");
        }
        match (commit.get("committed"), commit.get("message")) {
            (Some(option), _) => println!("  committed: {}", option.as_str().unwrap_or_default()),
            (None, Some(message)) => println!("  not committed: {}", message.as_str().unwrap_or_default()),
            _ => {}
        }
    }
    Ok(())
}

fn agent(path: &Path, max_steps: u64, out: Option<&Path>) -> Outcome {
    let doc = load(path)?;
    let scenario = doc
        .scenario
        .ok_or_else(|| Failure::Domain(format!("{}: no scenario block", path.display())))?;
    let trace = run_episode(&doc.kb, &doc.classes, &scenario, max_steps);
    write_output(out, &trace.to_jsonl())
}

fn pick_class(doc: &Document, name: Option<&str>) -> Result<DecisionClass, Failure> {
    match name {
        Some(n) => doc
            .class(n)
            .cloned()
            .ok_or_else(|| Failure::Domain(format!("unknown decision class `{n}`"))),
        None => match doc.classes.as_slice() {
            [only] => Ok(only.clone()),
            [] => Err(Failure::Domain("the document declares no decision class".into())),
            _ => Err(Failure::Usage("several decision classes; choose one with --class".into())),
        },
    }
}

fn bench(
    model: &Path,
    kb: &Path,
    n: usize,
    seed: u64,
    class: Option<&str>,
    out: Option<&Path>,
    json_out: Option<&Path>,
) -> Outcome {
    let model = GenerativeModel::from_toml(&read(model)?).map_err(|e| Failure::Domain(format!("{}: {e}", model.display())))?;
    let doc = load(kb)?;
    let class = pick_class(&doc, class)?;
    let report = run_comparison(&model, &doc.kb, &class, n, seed).map_err(|e| Failure::Domain(e.to_string()))?;
    if let Some(p) = json_out {
        let text = serde_json::to_string_pretty(&report).expect("json") + "\n";
        write_output(Some(p), &text)?;
    }
    write_output(out, &format!("{report}\n"))
}

fn run_server(kb: &Path, bind: &str, journal: Option<&Path>) -> Outcome {
    let doc = load(kb)?;
    let state = match journal {
        Some(j) => AppState::with_journal(doc.kb, doc.classes, j).map_err(|e| Failure::Domain(e.to_string()))?,
        None => AppState::new(doc.kb, doc.classes),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Domain(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Failure::Domain(format!("cannot bind {bind}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr().map_or_else(|_| bind.to_string(), |a| a.to_string()));
        serve(listener, Arc::new(state)).await.map_err(|e| Failure::Domain(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check { path } => check(&path),
        Command::Argue {
            kb,
            goal,
            theories,
            json,
        } => argue(&kb, &goal, theories, json),
        Command::Decide { kb, json } => decide(&kb, json),
        Command::Agent { kb, max_steps, out } => agent(&kb, max_steps, out.as_deref()),
        Command::Bench {
            model,
            kb,
            n,
            seed,
            class,
            out,
            json_out,
        } => bench(&model, &kb, n, seed, class.as_deref(), out.as_deref(), json_out.as_deref()),
        Command::Serve { kb, bind, journal } => run_server(&kb, &bind, journal.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Reported) => ExitCode::from(1),
        Err(Failure::Domain(message)) => {
            eprintln!("sdp: {}: {message}", error_label());
            ExitCode::from(1)
        }
        Err(Failure::Usage(message)) => {
            eprintln!("sdp: {}: {message}", error_label());
            ExitCode::from(2)
        }
    }
}
