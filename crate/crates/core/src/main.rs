use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use skillnet::attributes::{AttributeKind, AttributeTable};
use skillnet::descriptives::{self, Grouping, Metric, RankMethod};
use skillnet::estimation::{fit_exact, fit_mcmle, fit_mple, EstimationError, McmleOptions, Method};
use skillnet::gof::{gof_with, GofError, GofOptions};
use skillnet::graph::{BipartiteGraph, Side};
use skillnet::ingestion::{self, Corpus, Requirement, SkillDictionary};
use skillnet::io::{self, FitConfig, FitFile, GofConfig, GofFile, RunSettings};
use skillnet::sampler::{self, Proposal, SamplerConfig};
use skillnet::statistics::ModelSpec;

#[derive(Parser)]
#[command(name = "skillnet", version, about = "Bipartite skill networks: build, describe, fit ERGMs, simulate, check fit")]
struct Cli {
    /// Progress messages on standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a network file from a text corpus and a skills dictionary.
    Build(BuildArgs),
    /// Degree rankings, sub-graph summaries and correlations.
    Describe(DescribeArgs),
    /// Estimate model coefficients.
    Fit(FitArgs),
    /// Simulate networks from a model at given coefficients.
    Simulate(SimulateArgs),
    /// Goodness of fit of a fitted model.
    Gof(GofArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Directory of .txt documents.
    #[arg(long)]
    corpus: PathBuf,
    /// Skills dictionary (JSON object of skill to patterns).
    #[arg(long)]
    dict: PathBuf,
    /// Attribute CSV files with header label,attr,value.
    #[arg(long)]
    attrs: Vec<PathBuf>,
    /// Attributes that must cover a whole partition, as side:name[:kind].
    #[arg(long)]
    require: Vec<String>,
    #[arg(short, long)]
    output: PathBuf,
    /// Match report path; defaults to the output name with .matches.json.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    network: PathBuf,
    /// Quantitative first-partition attribute used for the O*NET ranking
    /// and correlations.
    #[arg(long)]
    importance: Option<String>,
    /// Centrality metrics to correlate.
    #[arg(long, value_delimiter = ',', default_value = "degree,eigenvector")]
    metrics: Vec<String>,
    /// Categorical second-partition attributes to summarize by level.
    #[arg(long)]
    group: Vec<String>,
    #[arg(long, value_enum, default_value_t = RankArg::Dense)]
    rank: RankArg,
    /// Directory for machine-readable tables.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SamplerArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated networks (per iteration for MC-MLE).
    #[arg(long, default_value_t = 1000)]
    nsim: usize,
    /// Proposals discarded per chain; defaults to 20·n·m.
    #[arg(long)]
    burnin: Option<u64>,
    /// Proposals between retained networks; defaults to n·m.
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long, value_enum, default_value_t = ProposalArg::Tnt)]
    proposal: ProposalArg,
    #[arg(long, default_value_t = 1)]
    chains: usize,
}

impl SamplerArgs {
    fn settings(&self, graph: &BipartiteGraph) -> RunSettings {
        let base = SamplerConfig::for_shape(graph.size(Side::First), graph.size(Side::Second));
        RunSettings {
            seed: self.seed,
            nsim: self.nsim,
            burnin: self.burnin.unwrap_or(base.burn_in),
            interval: self.interval.unwrap_or(base.interval),
            proposal: self.proposal.into(),
            chains: self.chains,
        }
    }
}

fn sampler_config(s: &RunSettings, graph: &BipartiteGraph) -> SamplerConfig {
    SamplerConfig {
        proposal: s.proposal,
        burn_in: s.burnin,
        interval: s.interval,
        sample_count: s.nsim,
        seed: s.seed,
        chains: s.chains,
        ..SamplerConfig::for_shape(graph.size(Side::First), graph.size(Side::Second))
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Mple)]
    method: MethodArg,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// MC-MLE iteration limit.
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    network: PathBuf,
    /// Fit file supplying the model and coefficients.
    #[arg(long, conflicts_with_all = ["model", "theta"])]
    fit: Option<PathBuf>,
    #[arg(long, requires = "theta")]
    model: Option<PathBuf>,
    /// Comma-separated coefficients in model order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "model")]
    theta: Option<Vec<f64>>,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Statistics TSV.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write every simulated network here.
    #[arg(long)]
    networks_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GofArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    fit: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Add degree-distribution comparisons.
    #[arg(long)]
    degrees: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProposalArg {
    Tnt,
    Uniform,
}

impl From<ProposalArg> for Proposal {
    fn from(p: ProposalArg) -> Self {
        match p {
            ProposalArg::Tnt => Proposal::TieNoTie,
            ProposalArg::Uniform => Proposal::UniformDyad,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mple,
    Mcmle,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankArg {
    Dense,
    Competition,
}

/// Exit status 1 for invalid input, 2 for numerical failure.
enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

impl From<EstimationError> for Failure {
    fn from(e: EstimationError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<GofError> for Failure {
    fn from(e: GofError) -> Self {
        match e {
            GofError::SingularCovariance { .. } | GofError::NotConverged => Failure::Numerical(e.to_string()),
            GofError::Sampler(sampler::SamplerError::Inconsistent { .. }) => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| invalid(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<(BipartiteGraph, AttributeTable), Failure> {
    io::read_network(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Build(a) => build(a, verbose),
        Command::Describe(a) => describe(a),
        Command::Fit(a) => fit(a, verbose),
        Command::Simulate(a) => simulate(a, verbose),
        Command::Gof(a) => gof(a, verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn parse_requirement(s: &str) -> Result<Requirement, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let side = match parts.first() {
        Some(&"first") => Side::First,
        Some(&"second") => Side::Second,
        _ => return Err(invalid(format!("requirement {s:?}: expected first:name or second:name[:kind]"))),
    };
    let kind = match parts.get(2) {
        None => None,
        Some(&"quantitative") => Some(AttributeKind::Quantitative),
        Some(&"categorical") => Some(AttributeKind::Categorical),
        Some(k) => return Err(invalid(format!("requirement {s:?}: unknown kind {k:?}"))),
    };
    match parts.get(1) {
        Some(name) if !name.is_empty() && parts.len() <= 3 => {
            Ok(Requirement { side, attribute: (*name).to_owned(), kind })
        }
        _ => Err(invalid(format!("requirement {s:?}: expected first:name or second:name[:kind]"))),
    }
}

fn build(a: BuildArgs, verbose: bool) -> Result<(), Failure> {
    let dictionary = SkillDictionary::from_json(&read(&a.dict)?).map_err(|e| invalid(format!("{}: {e}", a.dict.display())))?;
    let corpus = Corpus::from_dir(&a.corpus).map_err(invalid)?;
    for id in &corpus.skipped {
        eprintln!("warning: document {id:?} has no words and was skipped");
    }
    let (graph, matches) = ingestion::build_network(&corpus, &dictionary).map_err(invalid)?;
    let mut records = Vec::new();
    for path in &a.attrs {
        let file = std::fs::File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        records.extend(ingestion::read_attribute_csv(file).map_err(|e| invalid(format!("{}: {e}", path.display())))?);
    }
    let required = a.require.iter().map(|r| parse_requirement(r)).collect::<Result<Vec<_>, _>>()?;
    let attrs = ingestion::attach_attributes(&graph, &records, &required).map_err(invalid)?;
    write(&a.output, &io::write_network(&graph, &attrs))?;
    let report_path = a.report.unwrap_or_else(|| a.output.with_extension("matches.json"));
    let report = serde_json::json!({
        "tool": io::TOOL,
        "version": io::VERSION,
        "config": {
            "corpus": a.corpus,
            "dict": a.dict,
            "attrs": a.attrs,
            "require": a.require,
        },
        "skipped": corpus.skipped,
        "matches": matches,
    });
    write(&report_path, &io::to_json(&report))?;
    if verbose {
        eprintln!(
            "built {} x {} network with {} edges",
            graph.size(Side::First),
            graph.size(Side::Second),
            graph.edges().count()
        );
    }
    Ok(())
}

fn describe(a: DescribeArgs) -> Result<(), Failure> {
    let (graph, attrs) = load_network(&a.network)?;
    let method = match a.rank {
        RankArg::Dense => RankMethod::Dense,
        RankArg::Competition => RankMethod::Competition,
    };
    let metrics = a.metrics.iter().map(|m| Metric::parse(m)).collect::<Result<Vec<_>, _>>().map_err(invalid)?;
    let importance = a.importance.as_deref();
    let ranking = descriptives::ranking_table(&graph, &attrs, importance, method).map_err(invalid)?;
    let groupings: Vec<Grouping> = a.group.iter().map(|g| Grouping { attribute: g.clone(), levels: None }).collect();
    let subgraphs = descriptives::subgraph_summary(&graph, &attrs, &groupings).map_err(invalid)?;
    let correlations = if metrics.len() + usize::from(importance.is_some()) >= 2 {
        Some(descriptives::correlation_report(&graph, &attrs, importance, &metrics).map_err(invalid)?)
    } else {
        None
    };

    let g = io::fmt_g;
    let mut text = String::from("skill ranking\n");
    let rows: Vec<Vec<String>> = ranking
        .rows
        .iter()
        .map(|r| {
            vec![
                r.skill.clone(),
                r.onet_rank.map_or_else(String::new, |v| v.to_string()),
                r.centrality_rank.to_string(),
                r.degree.to_string(),
                format!("{:.2}", r.percent),
            ]
        })
        .chain(std::iter::once(vec![
            "total".to_owned(),
            String::new(),
            String::new(),
            ranking.total_degree.to_string(),
            format!("{:.2}", ranking.total_percent),
        ]))
        .collect();
    text.push_str(&io::aligned_table(&["skill", "importance rank", "centrality rank", "degree", "percent"], &rows));

    text.push_str("\nsub-graph degrees\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), g);
    let rows: Vec<Vec<String>> = subgraphs
        .iter()
        .map(|r| {
            let name = match (&r.attribute, &r.level) {
                (Some(attr), Some(level)) => format!("{attr}={level}{}", if r.empty { " (empty)" } else { "" }),
                _ => "entire network".to_owned(),
            };
            vec![
                name,
                r.second_count.to_string(),
                opt(r.first_mean),
                opt(r.first_sd),
                opt(r.second_mean),
                opt(r.second_sd),
            ]
        })
        .collect();
    text.push_str(&io::aligned_table(&["sub-graph", "second nodes", "first mean", "first sd", "second mean", "second sd"], &rows));

    if let Some(c) = &correlations {
        text.push_str("\ncorrelations\n");
        let rows: Vec<Vec<String>> = c
            .pairs
            .iter()
            .filter(|p| p.a != p.b)
            .map(|p| vec![p.a.clone(), p.b.clone(), g(p.pearson), g(p.pearson_p), g(p.spearman), g(p.spearman_p)])
            .collect();
        text.push_str(&io::aligned_table(&["a", "b", "pearson", "p", "spearman", "p"], &rows));
    }
    print!("{text}");

    if let Some(dir) = &a.out_dir {
        let config = serde_json::json!({
            "network": a.network,
            "importance": a.importance,
            "metrics": metrics,
            "group": a.group,
            "rank": method,
        });
        let doc = |name: &str, body: serde_json::Value| {
            serde_json::json!({"tool": io::TOOL, "version": io::VERSION, "config": config, name: body})
        };
        let to_value = |v: serde_json::Result<serde_json::Value>| v.expect("serializable");
        write(&dir.join("ranking.json"), &io::to_json(&doc("ranking", to_value(serde_json::to_value(&ranking)))))?;
        write(&dir.join("subgraphs.json"), &io::to_json(&doc("subgraphs", to_value(serde_json::to_value(&subgraphs)))))?;
        if let Some(c) = &correlations {
            write(&dir.join("correlations.json"), &io::to_json(&doc("correlations", to_value(serde_json::to_value(c)))))?;
        }
        write(&dir.join("describe.txt"), &text)?;
    }
    Ok(())
}

fn fit(a: FitArgs, verbose: bool) -> Result<(), Failure> {
    let (graph, attrs) = load_network(&a.network)?;
    let spec = io::read_model(&read(&a.model)?).map_err(|e| invalid(format!("{}: {e}", a.model.display())))?;
    let model = spec.bind(&graph, &attrs).map_err(invalid)?;
    let settings = a.sampler.settings(&graph);
    let method = match a.method {
        MethodArg::Mple => Method::Mple,
        MethodArg::Mcmle => Method::Mcmle,
        MethodArg::Exact => Method::Exact,
    };
    if verbose {
        eprintln!("fitting {} terms by {}", spec.len(), method.as_str());
    }
    let result = match method {
        Method::Mple => fit_mple(&model, &graph)?,
        Method::Exact => fit_exact(&model, &graph)?,
        Method::Mcmle => {
            let mut options = McmleOptions::for_shape(graph.size(Side::First), graph.size(Side::Second));
            options.sampler = sampler_config(&settings, &graph);
            if let Some(n) = a.max_iterations {
                options.max_iterations = n;
            }
            fit_mcmle(&model, &graph, &options)?
        }
    };
    let file = FitFile {
        tool: io::TOOL.to_owned(),
        version: io::VERSION.to_owned(),
        model: io::model_entries(&spec),
        config: FitConfig {
            method,
            network: a.network.display().to_string(),
            sampler: settings,
            max_iterations: a.max_iterations,
        },
        result,
    };
    write(&a.output, &io::to_json(&file))?;
    let text = io::render_fit(&file.result);
    write(&a.output.with_extension("txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn load_fit(path: &Path) -> Result<(FitFile, ModelSpec), Failure> {
    let file: FitFile = io::parse_json(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let spec = io::model_from_entries(&file.model).map_err(|e| invalid(format!("{}: model{e}", path.display())))?;
    Ok((file, spec))
}

fn simulate(a: SimulateArgs, verbose: bool) -> Result<(), Failure> {
    let (graph, attrs) = load_network(&a.network)?;
    let (spec, theta) = match (&a.fit, &a.model, &a.theta) {
        (Some(path), _, _) => {
            let (file, spec) = load_fit(path)?;
            (spec, file.result.theta)
        }
        (None, Some(model), Some(theta)) => {
            let spec = io::read_model(&read(model)?).map_err(|e| invalid(format!("{}: {e}", model.display())))?;
            (spec, theta.clone())
        }
        _ => return Err(invalid("simulate needs --fit, or --model with --theta")),
    };
    let model = spec.bind(&graph, &attrs).map_err(invalid)?;
    let settings = a.sampler.settings(&graph);
    let config = sampler_config(&settings, &graph);
    if verbose {
        eprintln!("simulating {} networks", config.sample_count);
    }
    let samples = sampler::sample(&model, &theta, &graph, &config).map_err(|e| match e {
        sampler::SamplerError::Inconsistent { .. } => Failure::Numerical(e.to_string()),
        _ => invalid(e),
    })?;
    let statistics: Vec<_> = samples.iter().map(|s| s.statistics.clone()).collect();
    write(&a.output, &io::statistics_tsv(&spec.names(), &statistics))?;
    if let Some(dir) = &a.networks_dir {
        let width = samples.len().to_string().len();
        for (r, s) in samples.iter().enumerate() {
            write(&dir.join(format!("network_{:0width$}.json", r + 1)), &io::write_network(&s.graph, &attrs))?;
        }
    }
    let meta = serde_json::json!({
        "tool": io::TOOL,
        "version": io::VERSION,
        "model": io::model_entries(&spec),
        "theta": theta,
        "config": {
            "network": a.network,
            "fit": a.fit,
            "sampler": settings,
            "networks_dir": a.networks_dir,
        },
    });
    write(&a.output.with_extension("json"), &io::to_json(&meta))?;
    Ok(())
}

fn gof(a: GofArgs, verbose: bool) -> Result<(), Failure> {
    let (graph, attrs) = load_network(&a.network)?;
    let (fit_file, spec) = load_fit(&a.fit)?;
    let settings = a.sampler.settings(&graph);
    let config = sampler_config(&settings, &graph);
    if verbose {
        eprintln!("simulating {} networks for goodness of fit", config.sample_count);
    }
    let options = GofOptions { degree_distribution: a.degrees };
    let report = gof_with(&spec, &graph, &attrs, &fit_file.result, &config, &options)?;
    let file = GofFile {
        tool: io::TOOL.to_owned(),
        version: io::VERSION.to_owned(),
        model: fit_file.model.clone(),
        theta: fit_file.result.theta.clone(),
        config: GofConfig {
            network: a.network.display().to_string(),
            fit: a.fit.display().to_string(),
            sampler: settings,
            degree_distribution: a.degrees,
        },
        report,
    };
    write(&a.output, &io::to_json(&file))?;
    let text = io::render_gof(&file.report);
    write(&a.output.with_extension("txt"), &text)?;
    print!("{text}");
    if file.report.is_singular() {
        return Err(GofError::SingularCovariance { statistics: file.report.singular_statistics }.into());
    }
    Ok(())
}
