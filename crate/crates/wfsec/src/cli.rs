//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::oracle::{check_full_invariance, check_full_invariance_on, check_non_disclosure, interpretation, OracleConfig};
use crate::rewrite::check_well_protected;
use crate::roles::{generalized_message_space, parse_protocol, Protocol, RoleMode};
use crate::selection::FunctionName;
use crate::witness::{analyze, Verdict};

/// Exit status for a run where every check passed.
pub const EXIT_OK: i32 = 0;
/// Exit status for input, parse or analysis errors.
pub const EXIT_ERROR: i32 = 1;
/// Exit status when the criterion is not met and no conclusion follows.
pub const EXIT_UNDECIDED: i32 = 2;
/// Exit status for malformed command lines.
pub const EXIT_USAGE: i32 = 64;

const UNDECIDED_BANNER: &str = "The growth criterion is not met: no decision can be made about secrecy. \
This is not evidence of an attack; the blame column localizes the decay.";

#[derive(Debug, Parser)]
#[command(name = "wfsec", version, about = "Static secrecy analysis of cryptographic protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    JsonLines,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Roles {
    Auto,
    Manual,
}

impl From<Option<Roles>> for RoleMode {
    fn from(r: Option<Roles>) -> Self {
        match r {
            None => RoleMode::Default,
            Some(Roles::Auto) => RoleMode::Auto,
            Some(Roles::Manual) => RoleMode::Manual,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the growth criterion on every generalized role.
    Analyze {
        file: PathBuf,
        /// Interpretation function.
        #[arg(long, env = "WFSEC_FUNCTION", default_value = "fmax")]
        function: FunctionName,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Role source; defaults to written roles when the file has any.
        #[arg(long, value_enum)]
        roles: Option<Roles>,
    },
    /// Report unprotected atoms in the generalized message space.
    CheckWp {
        file: PathBuf,
        #[arg(long, value_enum)]
        roles: Option<Roles>,
    },
    /// Print the generalized roles and the generalized message space.
    Roles {
        file: PathBuf,
        #[arg(long, value_enum)]
        roles: Option<Roles>,
    },
    /// Property runs of the bounded intruder oracle.
    Oracle {
        file: PathBuf,
        #[arg(long, env = "WFSEC_FUNCTION", default_value = "fmax")]
        function: FunctionName,
        /// Random well-protected sets for the full-invariance run.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Synthesis depth of the closure.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs the command line `args` (program name first) and returns the
/// process exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn load(path: &Path) -> Result<Protocol> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_protocol(&text)
}

fn io(e: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        reason: e.to_string(),
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Analyze {
            file,
            function,
            format,
            roles,
        } => {
            let p = load(&file)?;
            let report = analyze(&p, &function.instance(), roles.into())?;
            match format {
                Format::Table => writeln!(out, "{}", report.render_table()).map_err(io)?,
                Format::JsonLines => write!(out, "{}", report.render_json_lines()).map_err(io)?,
            }
            if report.verdict() == Verdict::Fulfilled {
                Ok(EXIT_OK)
            } else {
                if let Format::Table = format {
                    writeln!(out, "{UNDECIDED_BANNER}").map_err(io)?;
                }
                Ok(EXIT_UNDECIDED)
            }
        }
        Command::CheckWp { file, roles } => {
            let p = load(&file)?;
            let rs = p.roles(roles.into())?;
            let space = generalized_message_space(&p, &rs);
            let report = check_well_protected(&space, &p.context)?;
            if report.is_well_protected() {
                writeln!(out, "well-protected: {} patterns checked", space.len()).map_err(io)?;
                Ok(EXIT_OK)
            } else {
                for v in &report.violations {
                    writeln!(out, "{v}").map_err(io)?;
                }
                Ok(EXIT_UNDECIDED)
            }
        }
        Command::Roles { file, roles } => {
            let p = load(&file)?;
            let rs = p.roles(roles.into())?;
            for r in &rs {
                writeln!(out, "{r}").map_err(io)?;
            }
            writeln!(out, "Generalized message space:").map_err(io)?;
            for m in generalized_message_space(&p, &rs) {
                writeln!(out, "  {m}").map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Oracle {
            file,
            function,
            trials,
            depth,
            seed,
        } => {
            let p = load(&file)?;
            let session: Vec<_> = p.steps.iter().map(|s| s.message.clone()).collect();
            let cfg = OracleConfig {
                depth,
                ..OracleConfig::default()
            };
            let f = interpretation(function.instance());
            let disclosure = check_non_disclosure(&session, &p.context, depth)?;
            let local = check_full_invariance_on(&f, &session, &p.context, &cfg)?;
            let random = check_full_invariance(&f, trials, 5, seed, &cfg)?;
            writeln!(
                out,
                "non-disclosure (honest session, depth {depth}): {} ({} atoms, rejected {}, truncated {})",
                pass(disclosure.passed()),
                disclosure.checks,
                disclosure.rejected,
                disclosure.truncated
            )
            .map_err(io)?;
            for (_, a) in &disclosure.disclosed {
                writeln!(out, "  disclosed: {a}").map_err(io)?;
            }
            writeln!(
                out,
                "full invariance of {function} (honest session): {} ({} checks, {} counterexamples)",
                pass(local.passed()),
                local.checks,
                local.counterexamples.len()
            )
            .map_err(io)?;
            writeln!(
                out,
                "full invariance of {function} ({trials} random sets, seed {seed}): {} ({} checks, {} counterexamples, truncated {})",
                pass(random.passed()),
                random.checks,
                random.counterexamples.len(),
                random.truncated
            )
            .map_err(io)?;
            for c in local.counterexamples.iter().chain(&random.counterexamples).take(5) {
                writeln!(out, "  counterexample: {c}").map_err(io)?;
            }
            if disclosure.passed() && local.passed() && random.passed() {
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_UNDECIDED)
            }
        }
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
