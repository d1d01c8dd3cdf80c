//! Reference external generator for the line protocol.
//!
//! Reads one request per line on stdin and answers with the first legal path
//! of the turn's options that names a slot (any path if none does). `--noisy` appends an action that is never legal, to
//! exercise projection on the simulator side. `--silent` never answers.

use std::io::{self, BufRead, Write};

use todsim_core::action::{serialize_output, OutputRecord, SemanticAction};
use todsim_core::generator::protocol::{GeneratorRequest, GeneratorResponse};
use todsim_core::ConstraintGraph;

fn respond(req: &GeneratorRequest, noisy: bool) -> GeneratorResponse {
    let mut action: Vec<SemanticAction> = ConstraintGraph::from_options_json(&req.options)
        .map(|cg| {
            let paths = cg.paths();
            let pick = paths.iter().find(|a| a.slot != "none").or(paths.first());
            pick.cloned().into_iter().collect()
        })
        .unwrap_or_default();
    if noisy {
        action.push(SemanticAction::new("inform", "nowhere", "nothing", "never"));
    }
    let text = action.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
    GeneratorResponse {
        id: req.id,
        output: serialize_output(&OutputRecord::new(action, text)),
    }
}

fn main() -> io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let noisy = args.iter().any(|a| a == "--noisy");
    let silent = args.iter().any(|a| a == "--silent");
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if silent {
            continue;
        }
        match GeneratorRequest::from_line(&line) {
            Ok(req) => writeln!(out, "{}", respond(&req, noisy).to_line())?,
            Err(e) => eprintln!("todsim-echo: {e}"),
        }
        out.flush()?;
    }
    Ok(())
}
