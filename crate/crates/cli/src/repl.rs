//! Interactive advisory session.

use std::fs;
use std::io::{self, BufRead, Write};

use actclass::advise::{AdvisorSession, Observation, Prompt};
use actclass::sim::{EpisodeTrace, Outcome};
use actclass::Problem;
use anyhow::Context;

use crate::{load_policy, AdviseArgs};

fn fmt_belief(problem: &Problem, belief: &[f64]) -> String {
    belief
        .iter()
        .enumerate()
        .map(|(i, b)| format!("{}={b:.6}", problem.family.model_label(i)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn show_status(out: &mut impl Write, session: &AdvisorSession) -> io::Result<()> {
    let p = session.problem();
    let node = session.node();
    writeln!(
        out,
        "step {} | state {} | belief {} | cost {}/{}",
        session.step(),
        p.family.state_label(node.state),
        fmt_belief(p, &node.belief),
        node.cost,
        p.budget.cost_bound
    )?;
    match session.prompt() {
        Prompt::Act { action, fallback } => {
            let note = if fallback {
                " (no policy entry; cheapest affordable action)"
            } else {
                ""
            };
            writeln!(
                out,
                "recommended action: {}{note}",
                p.family.action_label(action)
            )?;
            write!(out, "observed next state> ")?;
        }
        Prompt::Finished(outcome) => {
            let msg = match outcome {
                Outcome::Decided(i) => format!("decision: {}", p.family.model_label(i)),
                Outcome::HorizonExpired => "horizon exhausted without a decision".to_string(),
                Outcome::CostExceededBlocked => {
                    "cost budget exhausted without a decision".to_string()
                }
                Outcome::UnsafeEntered => "left the safe region without a decision".to_string(),
            };
            writeln!(out, "{msg}")?;
        }
    }
    out.flush()
}

/// Drives the session from `input`, one observed state per line. Blank lines
/// are ignored; `quit` ends the session early.
fn run(
    session: &mut AdvisorSession,
    input: impl BufRead,
    out: &mut impl Write,
) -> anyhow::Result<()> {
    show_status(out, session)?;
    let mut lines = input.lines();
    while let Prompt::Act { action, .. } = session.prompt() {
        let Some(line) = lines.next() else {
            writeln!(out)?;
            writeln!(out, "input closed; session ended early")?;
            break;
        };
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            write!(out, "observed next state> ")?;
            out.flush()?;
            continue;
        }
        if text == "quit" || text == "q" {
            writeln!(out, "session ended by operator")?;
            break;
        }
        let family = &session.problem().family;
        let Some(state) = family.parse_state(text) else {
            writeln!(
                out,
                "warning: unknown state `{text}`; enter a state label or index"
            )?;
            write!(out, "observed next state> ")?;
            out.flush()?;
            continue;
        };
        let action_label = family.action_label(action);
        match session.observe(state)? {
            Observation::Unreachable => {
                writeln!(
                    out,
                    "warning: state {} is unreachable after {action_label} under every model; re-enter",
                    family.state_label(state)
                )?;
                write!(out, "observed next state> ")?;
                out.flush()?;
            }
            Observation::Accepted(_) => show_status(out, session)?,
        }
    }
    Ok(())
}

fn replay_input(trace: &EpisodeTrace) -> String {
    trace
        .steps
        .iter()
        .map(|s| format!("{}\n", s.next_state))
        .collect()
}

pub fn cmd_advise(args: AdviseArgs) -> anyhow::Result<()> {
    let (problem, policy) = load_policy(&args.policy, &args.problem)?;
    let mut session = AdvisorSession::new(&problem, &policy)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &args.replay {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let trace: EpisodeTrace = serde_json::from_str(text.trim())
                .with_context(|| format!("parsing {}", path.display()))?;
            run(&mut session, replay_input(&trace).as_bytes(), &mut out)?;
        }
        None => run(&mut session, io::stdin().lock(), &mut out)?,
    }
    fs::write(&args.transcript, session.transcript().to_json_line() + "\n")
        .with_context(|| format!("writing {}", args.transcript.display()))?;
    writeln!(out, "transcript: {}", args.transcript.display())?;
    Ok(())
}
