use std::path::Path;
use std::process::Command;

/// External PESQ scorer, e.g. `pesq +16000 {clean} {test}`.
///
/// The template is split on whitespace; `{clean}` and `{test}` are replaced
/// by file paths. The score is the last number printed on stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PesqCommand {
    pub template: String,
}

impl PesqCommand {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
        }
    }
}

/// Runs the configured scorer. Returns `None`, with a logged diagnostic,
/// when no command is configured or the command fails.
pub fn pesq_external(clean: &Path, test: &Path, command: Option<&PesqCommand>) -> Option<f64> {
    let command = command?;
    let args: Vec<String> = command
        .template
        .split_whitespace()
        .map(|a| {
            a.replace("{clean}", &clean.display().to_string())
                .replace("{test}", &test.display().to_string())
        })
        .collect();
    let Some((program, rest)) = args.split_first() else {
        log::warn!("PESQ command template is empty");
        return None;
    };
    let output = match Command::new(program).args(rest).output() {
        Ok(o) => o,
        Err(e) => {
            log::warn!("PESQ command `{program}` could not start: {e}");
            return None;
        }
    };
    if !output.status.success() {
        log::warn!(
            "PESQ command failed ({}): {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        );
        return None;
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let score = stdout
        .split_whitespace()
        .rev()
        .find_map(|tok| tok.parse::<f64>().ok().filter(|v| v.is_finite()));
    if score.is_none() {
        log::warn!("PESQ command printed no score: {:?}", stdout.trim());
    }
    score
}
