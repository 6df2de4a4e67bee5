//! `gridclear` command-line interface.
//!
//! Exit codes: 0 on success, 2 when some pipeline cells failed, 1 on any
//! configuration or input error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gridclear::clearing::{clear, MarketOutcome};
use gridclear::euphemia::{run_euphemia_with, DEFAULT_MAX_ITERS};
use gridclear::grid::validate_network;
use gridclear::ingest::{
    load_instance, load_zones, map_units, write_synthetic, InstancePaths, LoadedInstance, MappingError, RunConfig,
    SyntheticSpec, UnitMappingProblem,
};
use gridclear::market::MarketInstance;
use gridclear::pipeline::{dedup_labels, fmt6, run_pipeline, PipelineConfiguration};
use gridclear::pricing::{ch_prices, ip_prices, join_prices, settle, PricingRule};
use gridclear::redispatch::{feasibility_check, redispatch_min_cost, redispatch_min_volume, FlowCap};
use gridclear::report::price_stats;

#[derive(Parser, Debug)]
#[command(name = "gridclear", version, about = "Day-ahead market clearing, redispatch and pricing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (JSON); replaces the instance's config.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    mip_gap: Option<f64>,
    /// Security margin on line limits, in [0, 1).
    #[arg(long, global = true)]
    margin: Option<f64>,
    /// `zonal_flows` or `physical`.
    #[arg(long, global = true)]
    redispatch_flow_cap: Option<FlowCap>,
    #[arg(long, global = true)]
    price_cap: Option<f64>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for pipeline cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clear one configuration and print costs and dispatch.
    Clear(ClearArgs),
    /// Clear, then redispatch onto the full network.
    Redispatch(RedispatchArgs),
    /// Clear, price under one rule and settle.
    Price(PriceArgs),
    /// Run the iterative uniform-price clearing.
    Euphemia(EuphemiaArgs),
    /// Run configurations × rules and write result tables.
    Pipeline(PipelineArgs),
    /// Assign grid units to seller categories.
    MapUnits(MapUnitsArgs),
    /// Write a random instance.
    GenSynthetic(GenArgs),
    /// Price statistics per configuration and rule from a prices.csv.
    Stats(StatsArgs),
    /// Check an instance and report network components.
    Validate(InstanceArg),
}

#[derive(Args, Debug)]
struct InstanceArg {
    /// Instance directory.
    instance: PathBuf,
}

#[derive(Args, Debug)]
struct ClearArgs {
    instance: PathBuf,
    /// `national`, `nodal`, `zonal` (instance zones) or `zonal:<zones.csv>`.
    #[arg(long, default_value = "nodal")]
    configuration: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RedispatchObjectiveArg {
    Cost,
    Volume,
}

#[derive(Args, Debug)]
struct RedispatchArgs {
    instance: PathBuf,
    #[arg(long, default_value = "zonal")]
    configuration: String,
    #[arg(long, value_enum, default_value = "cost")]
    objective: RedispatchObjectiveArg,
}

#[derive(Args, Debug)]
struct PriceArgs {
    instance: PathBuf,
    #[arg(long, default_value = "nodal")]
    configuration: String,
    #[arg(long, default_value = "ip")]
    rule: PricingRule,
}

#[derive(Args, Debug)]
struct EuphemiaArgs {
    instance: PathBuf,
    /// `national`, `zonal` or `zonal:<zones.csv>`.
    #[arg(long, default_value = "zonal")]
    configuration: String,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    instance: PathBuf,
    /// Comma-separated configurations.
    #[arg(long, value_delimiter = ',', default_value = "national,zonal,nodal")]
    configurations: Vec<String>,
    /// Comma-separated pricing rules.
    #[arg(long, value_delimiter = ',', default_value = "ip,ch,join,euphemia")]
    rules: Vec<PricingRule>,
}

#[derive(Args, Debug)]
struct MapUnitsArgs {
    /// Mapping problem as JSON.
    problem: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    sellers: usize,
    #[arg(long, default_value_t = 4)]
    hours: usize,
    #[arg(long, default_value_t = 0.5)]
    congestion: f64,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// A prices.csv written by `pipeline`.
    prices: PathBuf,
}

fn load(global: &Global, dir: &Path) -> Result<LoadedInstance> {
    if !dir.is_dir() {
        bail!("instance directory {} does not exist", dir.display());
    }
    let mut paths = InstancePaths::in_dir(dir);
    if let Some(cfg) = &global.config {
        paths.config = Some(cfg.clone());
    }
    let mut loaded = load_instance(&paths)?;
    let cfg = &mut loaded.config;
    if let Some(gap) = global.mip_gap {
        cfg.mip_gap = gap;
    }
    if let Some(cap) = global.redispatch_flow_cap {
        cfg.redispatch_flow_cap = cap;
    }
    if let Some(cap) = global.price_cap {
        cfg.price_cap_eur_mwh = cap;
    }
    if let Some(m) = global.margin {
        cfg.margin = m;
        let network = loaded.instance.network.clone().with_margin(m)?;
        loaded.instance = loaded.instance.with_network(network)?;
    }
    loaded.config.validate()?;
    Ok(loaded)
}

fn parse_configuration(spec: &str, inst: &MarketInstance, cfg: &RunConfig) -> Result<PipelineConfiguration> {
    let spec = spec.trim();
    Ok(match spec {
        "national" => PipelineConfiguration::national(),
        "nodal" => PipelineConfiguration::nodal(),
        "zonal" => PipelineConfiguration::zonal(inst.zones.clone(), cfg.interconnector_fraction),
        _ => match spec.strip_prefix("zonal:") {
            Some(path) => {
                let zones = load_zones(Path::new(path), &inst.network)?;
                let mut pc = PipelineConfiguration::zonal(zones, cfg.interconnector_fraction);
                let stem = Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or(path);
                pc.label = format!("{}:{stem}", pc.label);
                pc
            }
            None => bail!("unknown configuration `{spec}` (expected national, zonal, zonal:<file> or nodal)"),
        },
    })
}

fn write_json(global: &Global, name: &str, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    if let Some(dir) = &global.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{text}");
    Ok(())
}

fn outcome_json(inst: &MarketInstance, out: &MarketOutcome) -> serde_json::Value {
    let dispatch: BTreeMap<&str, Vec<f64>> = inst
        .sellers
        .iter()
        .zip(&out.schedule.dispatch)
        .map(|(s, y)| (s.seller_id.as_str(), y.clone()))
        .collect();
    json!({
        "configuration": out.configuration.tag(),
        "generation_cost_eur": out.generation_cost,
        "objective_eur": out.objective,
        "unserved_mwh": out.total_unserved(),
        "mip_gap": out.mip_gap,
        "dispatch_mwh": dispatch,
    })
}

fn cmd_clear(global: &Global, args: &ClearArgs) -> Result<ExitCode> {
    let loaded = load(global, &args.instance)?;
    let inst = &loaded.instance;
    let pc = parse_configuration(&args.configuration, inst, &loaded.config)?;
    let out = clear(inst, &pc.configuration, loaded.config.mip_gap, &[])?;
    write_json(global, "outcome.json", &outcome_json(inst, &out))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_redispatch(global: &Global, args: &RedispatchArgs) -> Result<ExitCode> {
    let loaded = load(global, &args.instance)?;
    let inst = &loaded.instance;
    let cfg = &loaded.config;
    let pc = parse_configuration(&args.configuration, inst, cfg)?;
    let before = clear(inst, &pc.configuration, cfg.mip_gap, &[])?;
    let violations = feasibility_check(inst, &before)?;
    let r = match args.objective {
        RedispatchObjectiveArg::Cost => redispatch_min_cost(inst, &before, cfg.redispatch_flow_cap, cfg.mip_gap)?,
        RedispatchObjectiveArg::Volume => redispatch_min_volume(inst, &before, cfg.redispatch_flow_cap, cfg.mip_gap)?,
    };
    let value = json!({
        "configuration": pc.label,
        "generation_cost_eur": before.generation_cost,
        "redispatch_cost_eur": r.cost,
        "redispatch_volume_mwh": r.volume,
        "total_cost_eur": before.generation_cost + r.cost,
        "flow_cap": r.flow_cap.to_string(),
        "line_violations_before": violations.lines.len(),
        "balance_violations_before": violations.balances.len(),
        "after": outcome_json(inst, &r.outcome),
    });
    write_json(global, "redispatch.json", &value)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_price(global: &Global, args: &PriceArgs) -> Result<ExitCode> {
    let loaded = load(global, &args.instance)?;
    let inst = &loaded.instance;
    let cfg = &loaded.config;
    let pc = parse_configuration(&args.configuration, inst, cfg)?;
    let out = clear(inst, &pc.configuration, cfg.mip_gap, &[])?;
    let prices = match args.rule {
        PricingRule::Ip => ip_prices(inst, &out)?,
        PricingRule::Ch => ch_prices(inst, &out)?,
        PricingRule::Join => join_prices(inst, &out)?,
        PricingRule::Euphemia => bail!("use the `euphemia` subcommand for the iterative rule"),
    };
    let settlement = settle(inst, &out, &prices)?;
    let value = json!({
        "configuration": pc.label,
        "rule": args.rule.to_string(),
        "prices": prices,
        "settlement": settlement,
    });
    write_json(global, "price.json", &value)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_euphemia(global: &Global, args: &EuphemiaArgs) -> Result<ExitCode> {
    let loaded = load(global, &args.instance)?;
    let inst = &loaded.instance;
    let cfg = &loaded.config;
    let pc = parse_configuration(&args.configuration, inst, cfg)?;
    if pc.configuration.zones().is_none() && pc.label == "nodal" {
        bail!("euphemia needs a national or zonal configuration");
    }
    let r = run_euphemia_with(inst, &pc.configuration, cfg.mip_gap, args.max_iters)?;
    let cuts: Vec<_> = r
        .cuts
        .iter()
        .map(|&(s, t)| json!([inst.sellers[s].seller_id, t]))
        .collect();
    let value = json!({
        "configuration": pc.label,
        "iterations": r.iterations,
        "converged": r.converged,
        "cuts": cuts,
        "welfare_loss_eur": r.welfare_loss,
        "paradoxically_rejected": r.paradoxically_rejected,
        "adverse_flows": r.adverse_flows,
        "prices": r.prices,
        "total_mwp_eur": r.settlement.total_mwp,
        "outcome": outcome_json(inst, &r.outcome),
    });
    write_json(global, "euphemia.json", &value)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_pipeline(global: &Global, args: &PipelineArgs) -> Result<ExitCode> {
    let loaded = load(global, &args.instance)?;
    let inst = &loaded.instance;
    let mut configs = args
        .configurations
        .iter()
        .map(|c| parse_configuration(c, inst, &loaded.config))
        .collect::<Result<Vec<_>>>()?;
    dedup_labels(&mut configs);
    let out_dir = global.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let report = run_pipeline(inst, &loaded.config, &configs, &args.rules, global.jobs, Some(&out_dir))?;
    for f in &report.failures {
        log::error!("{f}");
    }
    println!(
        "{} configurations x {} rules written to {} ({})",
        configs.len(),
        args.rules.len(),
        out_dir.display(),
        if report.is_complete() { "ok" } else { "partial" }
    );
    Ok(if report.is_complete() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_map_units(global: &Global, args: &MapUnitsArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let problem: UnitMappingProblem =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.problem.display()))?;
    let gap = global.mip_gap.unwrap_or(0.0);
    match map_units(&problem, gap) {
        Ok(a) => {
            write_json(global, "mapping.json", &serde_json::to_value(&a)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(MappingError::Infeasible(report)) => {
            write_json(global, "mapping.json", &json!({ "infeasible": report }))?;
            bail!("no assignment within the deviation bounds")
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_gen(global: &Global, args: &GenArgs) -> Result<ExitCode> {
    let Some(dir) = &global.out_dir else {
        bail!("gen-synthetic needs --out-dir");
    };
    let spec = SyntheticSpec::new(global.seed, args.nodes, args.sellers, args.hours, args.congestion);
    let inst = write_synthetic(&spec, dir)?;
    println!(
        "wrote {} nodes, {} lines, {} sellers, {} hours to {}",
        inst.network.nodes().len(),
        inst.network.lines().len(),
        inst.sellers.len(),
        inst.hours,
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(global: &Global, args: &StatsArgs) -> Result<ExitCode> {
    let cap = global.price_cap.unwrap_or(gridclear::report::DEFAULT_PRICE_CAP);
    let text = fs::read_to_string(&args.prices).with_context(|| format!("reading {}", args.prices.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "configuration,rule,location,hour,price_eur_mwh" {
        bail!("{}: unexpected header `{header}`", args.prices.display());
    }
    let mut series: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("{}: line {}: expected 5 fields", args.prices.display(), i + 2);
        }
        let price: f64 = fields[4]
            .parse()
            .with_context(|| format!("{}: line {}: bad price", args.prices.display(), i + 2))?;
        series
            .entry((fields[0].to_string(), fields[1].to_string()))
            .or_default()
            .push(price);
    }
    let mut out = String::from("configuration,rule,mean,median,std,outliers\n");
    for ((config, rule), values) in &series {
        let s = price_stats(values, cap)?;
        out += &format!(
            "{config},{rule},{},{},{},{}\n",
            fmt6(s.mean),
            fmt6(s.median),
            fmt6(s.std),
            s.outliers
        );
    }
    if let Some(dir) = &global.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("stats.csv"), &out)?;
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(global: &Global, args: &InstanceArg) -> Result<ExitCode> {
    let loaded = load(global, &args.instance)?;
    let report = validate_network(&loaded.instance.network);
    let value = json!({
        "nodes": loaded.instance.network.nodes().len(),
        "lines": loaded.instance.network.lines().len(),
        "sellers": loaded.instance.sellers.len(),
        "buyers": loaded.instance.buyers.len(),
        "hours": loaded.instance.hours,
        "zones": loaded.instance.zones.zone_ids(),
        "components": report.components,
        "errors": report.errors.iter().map(|e| format!("{e:?}")).collect::<Vec<_>>(),
    });
    write_json(global, "validation.json", &value)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Clear(a) => cmd_clear(g, a),
        Command::Redispatch(a) => cmd_redispatch(g, a),
        Command::Price(a) => cmd_price(g, a),
        Command::Euphemia(a) => cmd_euphemia(g, a),
        Command::Pipeline(a) => cmd_pipeline(g, a),
        Command::MapUnits(a) => cmd_map_units(g, a),
        Command::GenSynthetic(a) => cmd_gen(g, a),
        Command::Stats(a) => cmd_stats(g, a),
        Command::Validate(a) => cmd_validate(g, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
