use crate::{ChannelArgs, ChannelCmd, CliError, Format, Kind, MethodArg, OutputArgs, RunArgs, SweepCmd, TomoCmd};
use qchan_core::channels::{canonical_form, is_trig_subfamily, ChannelSpec, KrausChannel, FA_TOL};
use qchan_core::decomposition::{
    dp_decomposition, gad_decomposition, is_over_depolarized, reduce, to_partition, KrausOp, SignedDecomposition, Term,
};
use qchan_core::experiment::{
    dynamics_sweep, run_protocol_with, sweep_to_csv, werner_visibility_for_fidelity, CountMode, Family, Method,
    ProtocolOptions, SourceKind, SourceModel, SweepConfig, SOURCE_FIDELITY,
};
use qchan_core::states::{concurrence, fidelity, purity};
use serde_json::json;
use std::fmt::{Display, Write as _};

fn config(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn run_err(e: impl Display) -> CliError {
    CliError::Run(e.to_string())
}

fn kind_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Dp => "dp",
        Kind::Gad => "gad",
        Kind::Ad => "ad",
        Kind::Dephasing => "dephasing",
        Kind::Trig => "trig",
    }
}

fn require(name: &str, value: Option<f64>, kind: Kind) -> Result<f64, CliError> {
    value.ok_or_else(|| CliError::Config(format!("{name} is required for --kind {}", kind_name(kind))))
}

fn reject(name: &str, value: Option<f64>, kind: Kind) -> Result<(), CliError> {
    match value {
        Some(_) => Err(CliError::Config(format!("{name} is not used by --kind {}", kind_name(kind)))),
        None => Ok(()),
    }
}

struct Built {
    spec: ChannelSpec,
    channel: KrausChannel,
    decomposition: SignedDecomposition,
}

fn build(args: &ChannelArgs) -> Result<Built, CliError> {
    let kind = args.kind;
    if kind == Kind::Trig {
        reject("lambda", args.lambda, kind)?;
        reject("gamma", args.gamma, kind)?;
    } else {
        reject("theta", args.theta, kind)?;
        reject("phi", args.phi, kind)?;
        if kind != Kind::Gad {
            reject("gamma", args.gamma, kind)?;
        }
    }
    let spec = match kind {
        Kind::Dp => ChannelSpec::Dp { lambda: require("lambda", args.lambda, kind)? },
        Kind::Gad => ChannelSpec::Gad { lambda: require("lambda", args.lambda, kind)?, gamma: require("gamma", args.gamma, kind)? },
        Kind::Ad => ChannelSpec::Ad { lambda: require("lambda", args.lambda, kind)? },
        Kind::Dephasing => ChannelSpec::Dephasing { lambda: require("lambda", args.lambda, kind)? },
        Kind::Trig => ChannelSpec::Trig {
            theta: require("theta", args.theta, kind)?.to_radians(),
            phi: require("phi", args.phi, kind)?.to_radians(),
        },
    };
    let channel = spec.build().map_err(config)?;
    let decomposition = match spec {
        ChannelSpec::Dp { lambda } => dp_decomposition(lambda).map_err(config)?,
        ChannelSpec::Gad { lambda, gamma } => gad_decomposition(lambda, gamma).map_err(config)?,
        ChannelSpec::Ad { lambda } => reduce(&gad_decomposition(lambda, 1.0).map_err(config)?, 4).map_err(run_err)?,
        ChannelSpec::Dephasing { lambda } => {
            let full = gad_decomposition(lambda, 0.0).map_err(config)?;
            reduce(&reduce(&full, 4).map_err(run_err)?, 3).map_err(run_err)?
        }
        _ => SignedDecomposition::new(channel.operators().iter().map(|k| Term::new(KrausOp::Custom(k.clone()), 1.0)).collect())
            .map_err(run_err)?,
    };
    Ok(Built { spec, channel, decomposition })
}

fn check_dt(dt: f64) -> Result<(), CliError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("dt = {dt} must be a positive number of seconds")))
    }
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), CliError> {
    match &out.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(value: &impl serde::Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(run_err)?;
    s.push('\n');
    Ok(s)
}

pub fn channel(cmd: &ChannelCmd) -> Result<(), CliError> {
    if cmd.output.format == Some(Format::Csv) {
        return Err(CliError::Config("format: channel reports are JSON only".into()));
    }
    check_dt(cmd.dt)?;
    let b = build(&cmd.channel)?;
    let affine = b.channel.to_affine().map_err(run_err)?;
    let canonical = canonical_form(&affine);
    let partition = to_partition(&b.decomposition, cmd.dt).map_err(config)?;
    let mut report = json!({
        "channel": b.spec,
        "kraus": ChannelSpec::from_channel(&b.channel),
        "completeness_defect": b.channel.completeness_defect(),
        "affine": affine,
        "canonical": canonical,
        "fa_check": canonical.fa_check(),
        "trig_subfamily": is_trig_subfamily(canonical.eta.into(), canonical.tau[2], FA_TOL),
        "decomposition": b.decomposition,
        "partition": partition,
        "overhead": b.decomposition.overhead(),
    });
    if let ChannelSpec::Dp { lambda } = b.spec {
        report["over_depolarized"] = json!(is_over_depolarized(lambda));
    }
    emit(&cmd.output, &to_json(&report)?)
}

pub fn decompose(cmd: &ChannelCmd) -> Result<(), CliError> {
    check_dt(cmd.dt)?;
    let b = build(&cmd.channel)?;
    let partition = to_partition(&b.decomposition, cmd.dt).map_err(config)?;
    let text = match cmd.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "decomposition": b.decomposition,
            "partition": partition,
            "overhead": b.decomposition.overhead(),
        }))?,
        Format::Csv => {
            let mut s = String::from("slot,op,weight,sign,duration\n");
            for (i, (t, slot)) in b.decomposition.terms().iter().zip(&partition.slots).enumerate() {
                let _ = writeln!(s, "{i},{},{},{},{}", t.op.label(), t.weight, slot.sign, slot.duration);
            }
            s
        }
    };
    emit(&cmd.output, &text)
}

fn parse_source(spec: Option<&str>, rate: f64) -> Result<SourceModel, CliError> {
    let kind = match spec {
        None => SourceKind::Werner { v: werner_visibility_for_fidelity(SOURCE_FIDELITY) },
        Some("ideal") => SourceKind::Ideal,
        Some(s) => match s.strip_prefix("werner:").map(str::parse::<f64>) {
            Some(Ok(v)) => SourceKind::Werner { v },
            _ => return Err(CliError::Config(format!("source = {s:?}: expected ideal or werner:V"))),
        },
    };
    SourceModel::new(kind, rate).map_err(config)
}

fn options(run: &RunArgs, dt: f64) -> Result<ProtocolOptions, CliError> {
    check_dt(dt)?;
    let seed = run.seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    });
    Ok(ProtocolOptions {
        total_time: dt,
        mode: if run.noiseless { CountMode::Noiseless } else { CountMode::Poisson },
        method: match run.method {
            MethodArg::Linear => Method::LinearInversion,
            MethodArg::Mle => Method::Mle,
        },
        seed,
    })
}

pub fn sweep(cmd: &SweepCmd) -> Result<(), CliError> {
    let family = match cmd.kind {
        Kind::Dp => {
            reject("gamma", cmd.gamma, cmd.kind)?;
            Family::Dp
        }
        Kind::Gad => {
            let gamma = require("gamma", cmd.gamma, cmd.kind)?;
            if !(0.0..=1.0).contains(&gamma) {
                return Err(CliError::Config(format!("gamma = {gamma} is out of range [0, 1]")));
            }
            Family::Gad { gamma }
        }
        Kind::Ad => {
            reject("gamma", cmd.gamma, cmd.kind)?;
            Family::Gad { gamma: 1.0 }
        }
        Kind::Dephasing | Kind::Trig => {
            return Err(CliError::Config(format!("kind = {}: sweep supports dp, gad and ad", kind_name(cmd.kind))));
        }
    };
    if cmd.steps < 2 {
        return Err(CliError::Config(format!("steps = {} must be at least 2", cmd.steps)));
    }
    let source = parse_source(cmd.run.source.as_deref(), cmd.run.rate)?;
    let opts = options(&cmd.run, cmd.dt)?;
    let cfg = SweepConfig {
        family,
        lambdas: SweepConfig::grid(cmd.steps),
        source,
        total_time: opts.total_time,
        mode: opts.mode,
        method: opts.method,
        seed: opts.seed,
    };
    let result = dynamics_sweep(&cfg).map_err(run_err)?;
    let show = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| format!("{v}"));
    match family {
        Family::Dp => eprintln!(
            "sudden death: theory {} (lambda' {}), simulated {} (lambda' {})",
            show(result.death_theory),
            show(result.death_theory_alt),
            show(result.death_sim),
            show(result.death_sim_alt)
        ),
        Family::Gad { .. } => eprintln!("sudden death: theory {}, simulated {}", show(result.death_theory), show(result.death_sim)),
    }
    let text = match cmd.output.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep_to_csv(&result),
        Format::Json => to_json(&json!({ "config": cfg, "result": result }))?,
    };
    emit(&cmd.output, &text)
}

pub fn tomo(cmd: &TomoCmd) -> Result<(), CliError> {
    let b = build(&cmd.channel)?;
    let source = parse_source(cmd.run.source.as_deref(), cmd.run.rate)?;
    let opts = options(&cmd.run, cmd.dt)?;
    let run = run_protocol_with(&b.decomposition, &source, &opts).map_err(run_err)?;
    let rho = &run.tomography.rho;
    let text = match cmd.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "channel": b.spec,
            "source": source,
            "options": opts,
            "metrics": {
                "fidelity_to_theory": fidelity(rho, &run.theory).map_err(run_err)?,
                "purity": purity(rho),
                "purity_theory": purity(&run.theory),
                "concurrence": concurrence(rho).map_err(run_err)?,
                "concurrence_theory": concurrence(&run.theory).map_err(run_err)?,
            },
            "run": run,
        }))?,
        Format::Csv => {
            let mut s = String::from("slot,label,sign,duration,counts,expected\n");
            for slot in &run.slots {
                for r in &slot.records {
                    let _ = writeln!(s, "{},{},{},{},{},{}", r.slot, r.label, r.sign, r.duration, r.counts, r.expected);
                }
            }
            s
        }
    };
    emit(&cmd.output, &text)
}
