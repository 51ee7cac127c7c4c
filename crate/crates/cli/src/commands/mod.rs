//! Subcommand registry and dispatch.

mod doe;
mod multiplier;
mod spaces;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::config::{parse_at, CliError, CliResult, Context};
use crate::report::Output;
use multiplier::Condition;

/// Every subcommand, in the order listed by `--help` and error messages.
pub const COMMANDS: &[&str] = &[
    "besov-norm",
    "check-weight",
    "check-mikhlin",
    "check-hormander",
    "estimate-mpgamma",
    "check-convolution",
    "check-fourier-type",
    "verify-embedding",
    "check-operator",
    "solve-dop",
    "solve-full",
    "solve-degenerate",
    "verify-coercivity",
    "verify-interpolation",
];

pub fn unknown_command(name: &str) -> CliError {
    CliError::Config(format!(
        "unknown command {name:?}; valid subcommands: {}",
        COMMANDS.join(", ")
    ))
}

fn json<T: Serialize>(v: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(v).map_err(std::io::Error::from)?)
}

/// Parse `params`, run, and return the resolved parameters with the output.
fn run_with<P, F>(params: Value, f: F) -> CliResult<(Value, Output)>
where
    P: DeserializeOwned + Serialize,
    F: FnOnce(&P) -> CliResult<Output>,
{
    let p: P = parse_at("params", params)?;
    let out = f(&p)?;
    Ok((json(&p)?, out))
}

/// As [`run_with`] for commands that also resolve solver settings.
fn run_with_settings<P, F>(params: Value, f: F) -> CliResult<(Value, Output)>
where
    P: DeserializeOwned + Serialize,
    F: FnOnce(&P) -> CliResult<(Output, besov_core::doe::SolverSettings)>,
{
    let p: P = parse_at("params", params)?;
    let (out, settings) = f(&p)?;
    let mut resolved = json(&p)?;
    if let Value::Object(map) = &mut resolved {
        map.insert("settings".into(), json(&settings)?);
    }
    Ok((resolved, out))
}

pub fn dispatch(name: &str, ctx: &Context, params: Value) -> CliResult<(Value, Output)> {
    match name {
        "besov-norm" => run_with(params, |p| spaces::besov_norm_cmd(ctx, p)),
        "check-weight" => run_with(params, |p| spaces::check_weight(ctx, p)),
        "check-mikhlin" => run_with(params, |p| multiplier::check_condition(ctx, p, Condition::Mikhlin)),
        "check-hormander" => run_with(params, |p| multiplier::check_condition(ctx, p, Condition::Hormander)),
        "estimate-mpgamma" => run_with(params, |p| multiplier::estimate_mpgamma(ctx, p)),
        "check-convolution" => run_with(params, |p| multiplier::check_convolution(ctx, p)),
        "check-fourier-type" => run_with(params, |p| multiplier::check_fourier_type(ctx, p)),
        "verify-embedding" => run_with(params, |p| spaces::verify_embedding_cmd(ctx, p)),
        "check-operator" => run_with(params, |p| spaces::check_operator(ctx, p)),
        "solve-dop" => run_with(params, |p| doe::solve_dop(ctx, p)),
        "solve-full" => run_with_settings(params, |p| doe::solve_full_cmd(ctx, p)),
        "solve-degenerate" => run_with_settings(params, |p| doe::solve_degenerate_cmd(ctx, p)),
        "verify-coercivity" => run_with_settings(params, |p| doe::verify_coercivity_cmd(ctx, p)),
        "verify-interpolation" => run_with(params, |p| doe::verify_interpolation(ctx, p)),
        other => Err(unknown_command(other)),
    }
}
