//! Stage orchestration: wires price panels through detection, spectral
//! decomposition, market-model residuals, dependency networks, tree
//! analytics, community tests, and swing-frequency fits, writing one tidy
//! artifact per result. Every byte written here is a pure function of the
//! inputs and the seed; the manifest carries no timestamps so reruns can be
//! compared with `diff -r`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array2;

use crashnet::aftershock::{compare_periods, gr_fit, peak_trough_magnitudes, GrFit};
use crashnet::capm::{abnormal_returns, CapmFit};
use crashnet::community::modularity_significance;
use crashnet::hellinger::{rolling_hellinger, segment};
use crashnet::hht::{emd, hilbert_energy, SiftConfig};
use crashnet::minet::{
    conditional_mi_matrix, largest_component, mi_pvalue_matrix, mst_prim, pair_seed, threshold_mi,
    to_graph,
};
use crashnet::topo::{core_periphery, metric_report};
use crashnet::{
    CrashSegmentation, DependencyGraph, GroundTruth, MiConfig, MiMatrix, Period, PricePanel,
    ReturnPanel, SpanningTree, SynthSpec,
};

use crate::config::{RunConfig, Stage};

/// Input panels after validation: stocks separated from the benchmark index,
/// both restricted to their common dates.
pub struct Inputs {
    pub stocks: PricePanel,
    /// Single-column panel holding the index, when one was configured.
    pub index: Option<PricePanel>,
    pub index_ticker: Option<String>,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Run record written next to the outputs. Deliberately timestamp-free.
#[derive(serde::Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub stages_requested: Vec<String>,
    pub stages_executed: Vec<String>,
    pub index_ticker: Option<String>,
    pub dropped_assets: Vec<String>,
    pub warnings: Vec<String>,
    /// Derived stream per randomized stage and period.
    pub stage_seeds: BTreeMap<String, u64>,
    pub periods: Option<CrashSegmentation>,
    pub outputs: Vec<String>,
    /// "ok" or "FAILED".
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl Manifest {
    fn new(cfg: &RunConfig, command: &str, requested: &[Stage], inputs: &Inputs) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            stages_requested: requested.iter().map(|s| s.name().to_string()).collect(),
            stages_executed: Vec::new(),
            index_ticker: inputs.index_ticker.clone(),
            dropped_assets: inputs.dropped.clone(),
            warnings: inputs.warnings.clone(),
            stage_seeds: BTreeMap::new(),
            periods: None,
            outputs: Vec::new(),
            status: "ok".to_string(),
            failed_stage: None,
            error: None,
        }
    }
}

/// Per-run cache so later stages reuse earlier results instead of
/// recomputing them.
#[derive(Default)]
struct Ctx {
    returns: Option<ReturnPanel>,
    index_returns: Option<ReturnPanel>,
    seg: Option<CrashSegmentation>,
    capm: BTreeMap<String, (ReturnPanel, Vec<CapmFit>)>,
    nets: BTreeMap<String, (MiMatrix, SpanningTree)>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let path = cfg.prices.as_ref().ok_or_else(|| {
        anyhow!("no price panel configured; pass --prices or set `prices` in the config file")
    })?;
    let (panel, dropped) = PricePanel::from_csv_path_dropping(path)
        .with_context(|| format!("reading price panel {}", path.display()))?;
    let mut warnings: Vec<String> = dropped
        .iter()
        .map(|t| format!("dropped {t}: non-positive or non-finite closes"))
        .collect();

    let Some(spec) = &cfg.market_index else {
        return Ok(Inputs {
            stocks: panel,
            index: None,
            index_ticker: None,
            dropped,
            warnings,
        });
    };

    // A column of the panel wins over a file of the same name so the
    // resolution does not depend on the working directory.
    if let Some(col) = panel.asset_index(spec) {
        if panel.n_assets() < 2 {
            bail!("price panel has no stock columns besides the index `{spec}`");
        }
        let keep: Vec<usize> = (0..panel.n_assets()).filter(|&j| j != col).collect();
        let stocks = select_columns(&panel, &keep)?;
        let index = select_columns(&panel, &[col])?;
        return Ok(Inputs {
            stocks,
            index: Some(index),
            index_ticker: Some(spec.clone()),
            dropped,
            warnings,
        });
    }

    if !Path::new(spec).is_file() {
        bail!("market index `{spec}` is neither a column of the price panel nor a readable file");
    }
    let (ipanel, idropped) = PricePanel::from_csv_path_dropping(spec)
        .with_context(|| format!("reading market index {spec}"))?;
    for t in &idropped {
        warnings.push(format!("dropped index column {t}: non-positive or non-finite closes"));
    }
    if ipanel.n_assets() == 0 {
        bail!("market index {spec} has no usable column");
    }
    if ipanel.n_assets() > 1 {
        warnings.push(format!(
            "market index {spec} has {} columns; using the first ({})",
            ipanel.n_assets(),
            ipanel.assets()[0]
        ));
    }
    let ticker = ipanel.assets()[0].clone();
    let index = select_columns(&ipanel, &[0])?;
    let common = panel.common_dates(&index);
    if common.len() < 2 {
        bail!(
            "price panel and market index share only {} dates; need at least 2",
            common.len()
        );
    }
    if common.len() < panel.n_days() || common.len() < index.n_days() {
        warnings.push(format!(
            "date intersection keeps {} of {} panel days and {} index days",
            common.len(),
            panel.n_days(),
            index.n_days()
        ));
    }
    Ok(Inputs {
        stocks: panel.restrict_to_dates(&common)?,
        index: Some(index.restrict_to_dates(&common)?),
        index_ticker: Some(ticker),
        dropped,
        warnings,
    })
}

fn select_columns(panel: &PricePanel, cols: &[usize]) -> Result<PricePanel> {
    let mut closes = Array2::zeros((panel.n_days(), cols.len()));
    for (jj, &j) in cols.iter().enumerate() {
        closes.column_mut(jj).assign(&panel.column(j));
    }
    let assets = cols.iter().map(|&j| panel.assets()[j].clone()).collect();
    Ok(PricePanel::from_parts(
        panel.dates().to_vec(),
        assets,
        closes,
    )?)
}

/// One derived seed per randomized stage and period; keeps the streams
/// independent of stage order and worker count.
fn stage_seed(seed: u64, stage: Stage, period: Period) -> u64 {
    pair_seed(seed, stage as usize, period as usize)
}

pub fn run_pipeline(cfg: &RunConfig, command: &str) -> Result<()> {
    let requested: Vec<Stage> = cfg.stages.clone();
    if requested.is_empty() {
        bail!("no stages requested");
    }
    let requested_set: BTreeSet<Stage> = requested.iter().copied().collect();
    let mut needed = requested_set.clone();
    for s in &requested_set {
        needed.extend(s.prereqs().iter().copied());
    }

    let inputs = load_inputs(cfg)?;
    let index_stages: Vec<&str> = [Stage::Hht, Stage::Capm]
        .iter()
        .copied()
        .filter(|s| needed.contains(s))
        .map(|s| s.name())
        .collect();
    if !index_stages.is_empty() && inputs.index.is_none() {
        bail!(
            "stage {} needs a market index; pass --market-index with a CSV path or a panel column",
            index_stages.join(", ")
        );
    }
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;

    let mut manifest = Manifest::new(cfg, command, &requested, &inputs);
    let mut ctx = Ctx::default();
    for stage in Stage::ALL {
        if !needed.contains(&stage) {
            continue;
        }
        let write = requested_set.contains(&stage);
        match run_stage(cfg, stage, write, &inputs, &mut ctx, &mut manifest) {
            Ok(()) => manifest.stages_executed.push(stage.name().to_string()),
            Err(e) => {
                manifest.status = "FAILED".to_string();
                manifest.failed_stage = Some(stage.name().to_string());
                manifest.error = Some(format!("{e:#}"));
                write_manifest(cfg, &mut manifest)?;
                return Err(e.context(format!("stage {} failed", stage.name())));
            }
        }
    }
    write_manifest(cfg, &mut manifest)
}

fn run_stage(
    cfg: &RunConfig,
    stage: Stage,
    write: bool,
    inputs: &Inputs,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    match stage {
        Stage::Hellinger => stage_hellinger(cfg, write, inputs, ctx, manifest),
        Stage::Hht => stage_hht(cfg, write, inputs, ctx, manifest),
        Stage::Capm => stage_capm(cfg, write, inputs, ctx, manifest),
        Stage::Network => stage_network(cfg, write, ctx, manifest),
        Stage::Metrics => stage_metrics(cfg, write, ctx, manifest),
        Stage::Community => stage_community(cfg, write, ctx, manifest),
        Stage::Gr => stage_gr(cfg, write, inputs, ctx, manifest),
    }
}

fn stage_hellinger(
    cfg: &RunConfig,
    write: bool,
    inputs: &Inputs,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    let rets = inputs.stocks.log_returns()?;
    let series = rolling_hellinger(&rets, &cfg.hellinger())?;
    // The divergence trace goes out before segmentation so a failed
    // segmentation still leaves the evidence on disk.
    if write {
        let mut w = out_file(cfg, manifest, "hellinger.csv")?;
        writeln!(w, "date,h,threshold,flag")?;
        let flags = series.flags();
        for (i, date) in series.dates.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                date,
                series.h[i],
                series.threshold,
                u8::from(flags[i])
            )?;
        }
        w.flush()?;
    }
    let seg = segment(&series, inputs.stocks.dates())?;
    if write {
        write_json(cfg, manifest, "periods.json", &seg)?;
    }
    manifest.periods = Some(seg.clone());
    ctx.returns = Some(rets);
    ctx.seg = Some(seg);
    Ok(())
}

fn ensure_index_returns<'a>(ctx: &'a mut Ctx, index: &PricePanel) -> Result<&'a ReturnPanel> {
    if ctx.index_returns.is_none() {
        ctx.index_returns = Some(index.log_returns()?);
    }
    Ok(ctx.index_returns.as_ref().unwrap())
}

fn stage_hht(
    cfg: &RunConfig,
    write: bool,
    inputs: &Inputs,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    let index = inputs.index.as_ref().expect("validated before stages");
    let iret = ensure_index_returns(ctx, index)?;
    let dates = iret.dates().to_vec();
    let signal: Vec<f64> = iret.column(0).to_vec();
    let set = emd(&signal, cfg.max_imfs, &SiftConfig::default())
        .context("decomposing the index returns")?;
    let spectrum = hilbert_energy(&set)?;
    if write {
        let mut w = out_file(cfg, manifest, "ie.csv")?;
        writeln!(w, "date,ie,ie_n")?;
        for (t, date) in dates.iter().enumerate() {
            writeln!(w, "{},{},{}", date, spectrum.ie[t], spectrum.ie_n[t])?;
        }
        w.flush()?;

        // Plotting grid: amplitude pooled over modes per (day, bin).
        let mut pooled: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for cell in &spectrum.grid {
            *pooled.entry((cell.t, cell.freq_bin)).or_insert(0.0) += cell.amplitude;
        }
        let mut w = out_file(cfg, manifest, "spectrum.csv")?;
        writeln!(w, "date,freq_bin,amplitude")?;
        for ((t, bin), amp) in pooled {
            writeln!(w, "{},{},{}", dates[t], bin, amp)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn stage_capm(
    cfg: &RunConfig,
    write: bool,
    inputs: &Inputs,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    let seg = ctx.seg.clone().expect("hellinger is a prerequisite");
    let index = inputs.index.as_ref().expect("validated before stages");
    ensure_index_returns(ctx, index)?;
    for period in Period::ALL {
        let window = seg.window(period);
        let sub = ctx
            .returns
            .as_ref()
            .unwrap()
            .slice(window)
            .with_context(|| format!("slicing stock returns to {}", period.as_str()))?;
        let isub = ctx.index_returns.as_ref().unwrap().slice(window)?;
        if sub.n_days() != isub.n_days() {
            bail!(
                "{}: stock and index windows disagree ({} vs {} days)",
                period.as_str(),
                sub.n_days(),
                isub.n_days()
            );
        }
        let market: Vec<f64> = isub.column(0).to_vec();
        let (resid, fits) = abnormal_returns(&sub, &market)
            .with_context(|| format!("fitting the market model in {}", period.as_str()))?;
        if write {
            let mut w = out_file(cfg, manifest, &format!("capm_{}.csv", period.as_str()))?;
            writeln!(w, "ticker,alpha,beta,resid_var")?;
            for (ticker, fit) in resid.assets().iter().zip(&fits) {
                writeln!(w, "{},{},{},{}", ticker, fit.alpha, fit.beta, fit.resid_var)?;
            }
            w.flush()?;
        }
        ctx.capm.insert(period.as_str().to_string(), (resid, fits));
    }
    Ok(())
}

fn stage_network(
    cfg: &RunConfig,
    write: bool,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    for period in Period::ALL {
        let key = period.as_str();
        let (resid, _) = ctx.capm.get(key).expect("capm is a prerequisite");
        let seed = stage_seed(cfg.seed, Stage::Network, period);
        manifest.stage_seeds.insert(format!("network_{key}"), seed);
        let matrix = conditional_mi_matrix(resid, &cfg.mi(seed))
            .with_context(|| format!("building the {key} dependency matrix"))?;
        let graph = to_graph(&matrix);
        let lcc = largest_component(&graph);
        let tree = mst_prim(&lcc)
            .with_context(|| format!("spanning the {key} dependency network"))?;
        if write {
            write_matrix_csv(cfg, manifest, &format!("mi_{key}.csv"), &matrix)?;
            write_pvalue_csv(cfg, manifest, &format!("pvalues_{key}.csv"), &matrix)?;
            write_mask_csv(cfg, manifest, &format!("mask_{key}.csv"), &matrix)?;
            let sidecar = NetworkSidecar {
                period: key,
                config: matrix.config.clone(),
                n_assets: matrix.assets.len(),
                significant_pairs: significant_pairs(&matrix),
                graph_nodes: graph.nodes.len(),
                lcc_nodes: lcc.nodes.len(),
                mst_edges: tree.edges.len(),
            };
            write_json(cfg, manifest, &format!("network_{key}.json"), &sidecar)?;
            let mut w = out_file(cfg, manifest, &format!("mst_{key}.csv"))?;
            writeln!(w, "src,dst,distance,mi")?;
            for e in &tree.edges {
                writeln!(
                    w,
                    "{},{},{},{}",
                    tree.nodes[e.a], tree.nodes[e.b], e.distance, e.mi
                )?;
            }
            w.flush()?;
        }
        ctx.nets.insert(key.to_string(), (matrix, tree));
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct NetworkSidecar<'a> {
    period: &'a str,
    config: MiConfig,
    n_assets: usize,
    significant_pairs: usize,
    graph_nodes: usize,
    lcc_nodes: usize,
    mst_edges: usize,
}

fn significant_pairs(matrix: &MiMatrix) -> usize {
    let n = matrix.assets.len();
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if matrix.mask[[i, j]] {
                count += 1;
            }
        }
    }
    count
}

#[derive(serde::Serialize)]
struct GlobalMetrics {
    n_nodes: usize,
    avg_closeness: f64,
    avg_eccentricity: f64,
    avg_eigenvector: f64,
    avg_weighted_degree: f64,
    avg_betweenness: f64,
    avg_path_length: f64,
    global_efficiency: f64,
    assortativity: f64,
    algebraic_connectivity: f64,
    tree_length: f64,
    core_concentration: f64,
    periphery_fragility: f64,
}

fn stage_metrics(
    cfg: &RunConfig,
    write: bool,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    for period in Period::ALL {
        let key = period.as_str();
        let (_, tree) = ctx.nets.get(key).expect("network is a prerequisite");
        let report = metric_report(tree)
            .with_context(|| format!("computing {key} tree metrics"))?;
        let cp = core_periphery(&report);
        if !write {
            continue;
        }
        let globals = GlobalMetrics {
            n_nodes: report.nodes.len(),
            avg_closeness: report.avg_closeness,
            avg_eccentricity: report.avg_eccentricity,
            avg_eigenvector: report.avg_eigenvector,
            avg_weighted_degree: report.avg_weighted_degree,
            avg_betweenness: report.avg_betweenness,
            avg_path_length: report.avg_path_length,
            global_efficiency: report.global_efficiency,
            assortativity: report.assortativity,
            algebraic_connectivity: report.algebraic_connectivity,
            tree_length: report.tree_length,
            core_concentration: cp.core_concentration,
            periphery_fragility: cp.periphery_fragility,
        };
        write_json(cfg, manifest, &format!("metrics_{key}.json"), &globals)?;
        let mut w = out_file(cfg, manifest, &format!("nodes_{key}.csv"))?;
        writeln!(
            w,
            "ticker,closeness,eccentricity,eigenvector,weighted_degree,betweenness"
        )?;
        for (i, ticker) in report.nodes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                ticker,
                report.closeness[i],
                report.eccentricity[i],
                report.eigenvector[i],
                report.weighted_degree[i],
                report.betweenness[i]
            )?;
        }
        w.flush()?;
    }
    Ok(())
}

fn stage_community(
    cfg: &RunConfig,
    write: bool,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    for period in Period::ALL {
        let key = period.as_str();
        let (_, tree) = ctx.nets.get(key).expect("network is a prerequisite");
        let seed = stage_seed(cfg.seed, Stage::Community, period);
        manifest.stage_seeds.insert(format!("community_{key}"), seed);
        let graph = DependencyGraph {
            nodes: tree.nodes.clone(),
            edges: tree.edges.clone(),
        };
        let result = modularity_significance(&graph, cfg.null_replicates, seed)
            .with_context(|| format!("testing {key} community structure"))?;
        if write {
            write_json(cfg, manifest, &format!("community_{key}.json"), &result)?;
        }
    }
    Ok(())
}

/// Interpretation flags shipped with the numbers: the reference law behind
/// the KS p-values and which windows feed each slope are modelling choices,
/// so the file states them instead of leaving readers to guess.
#[derive(serde::Serialize)]
struct GrFile {
    ks_reference: &'static str,
    fit_windows: &'static str,
    assets: BTreeMap<String, GrRecord>,
}

#[derive(serde::Serialize)]
struct GrRecord {
    b_pre: f64,
    b_post: f64,
    delta_b: f64,
    r2_pre: f64,
    r2_post: f64,
    ks_p_pre: f64,
    ks_p_post: f64,
    n_pre: usize,
    n_post: usize,
}

fn fit_window(prices: &[f64]) -> crashnet::Result<GrFit> {
    let magnitudes = peak_trough_magnitudes(prices)?;
    gr_fit(&magnitudes)
}

fn stage_gr(
    cfg: &RunConfig,
    write: bool,
    inputs: &Inputs,
    ctx: &mut Ctx,
    manifest: &mut Manifest,
) -> Result<()> {
    let seg = ctx.seg.as_ref().expect("hellinger is a prerequisite");
    let pre = inputs.stocks.slice(seg.window(Period::PreCrash))?;
    let post = inputs.stocks.slice(seg.window(Period::PostCrash))?;

    // The index participates as one more series when configured.
    let mut columns: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (j, ticker) in pre.assets().iter().enumerate() {
        columns.push((
            ticker.clone(),
            pre.column(j).to_vec(),
            post.column(post.asset_index(ticker).unwrap()).to_vec(),
        ));
    }
    if let Some(index) = &inputs.index {
        let ipre = index.slice(seg.window(Period::PreCrash))?;
        let ipost = index.slice(seg.window(Period::PostCrash))?;
        columns.push((
            inputs.index_ticker.clone().unwrap(),
            ipre.column(0).to_vec(),
            ipost.column(0).to_vec(),
        ));
    }

    let mut records: BTreeMap<String, GrRecord> = BTreeMap::new();
    let mut fits: BTreeMap<String, (GrFit, GrFit)> = BTreeMap::new();
    for (ticker, pre_prices, post_prices) in &columns {
        let pre_fit = match fit_window(pre_prices) {
            Ok(f) => f,
            Err(e) => {
                manifest
                    .warnings
                    .push(format!("gr: skipped {ticker} (pre_crash): {e}"));
                continue;
            }
        };
        let post_fit = match fit_window(post_prices) {
            Ok(f) => f,
            Err(e) => {
                manifest
                    .warnings
                    .push(format!("gr: skipped {ticker} (post_crash): {e}"));
                continue;
            }
        };
        let delta = compare_periods(&pre_fit, &post_fit);
        records.insert(
            ticker.clone(),
            GrRecord {
                b_pre: delta.b_pre,
                b_post: delta.b_post,
                delta_b: delta.delta_b,
                r2_pre: pre_fit.r_squared,
                r2_post: post_fit.r_squared,
                ks_p_pre: pre_fit.ks_p,
                ks_p_post: post_fit.ks_p,
                n_pre: pre_fit.n_events,
                n_post: post_fit.n_events,
            },
        );
        fits.insert(ticker.clone(), (pre_fit, post_fit));
    }
    if records.is_empty() {
        bail!("no asset produced enough price swings in both the pre and post windows");
    }
    if write {
        let file = GrFile {
            ks_reference: "exponential law implied by the fitted slope (rate = b * ln 10)",
            fit_windows: "pre and post slopes are fitted on their own price windows",
            assets: records,
        };
        write_json(cfg, manifest, "gr.json", &file)?;
        let mut w = out_file(cfg, manifest, "gr_points.csv")?;
        writeln!(w, "asset,period,magnitude,log10_count")?;
        for (ticker, (pre_fit, post_fit)) in &fits {
            for &(m, l) in &pre_fit.exceedance_points {
                writeln!(w, "{ticker},pre_crash,{m},{l}")?;
            }
            for &(m, l) in &post_fit.exceedance_points {
                writeln!(w, "{ticker},post_crash,{m},{l}")?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn out_file(cfg: &RunConfig, manifest: &mut Manifest, name: &str) -> Result<BufWriter<File>> {
    let path = cfg.out_dir.join(name);
    let file =
        File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    manifest.outputs.push(name.to_string());
    Ok(BufWriter::new(file))
}

fn write_json<T: serde::Serialize>(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    name: &str,
    value: &T,
) -> Result<()> {
    let mut w = out_file(cfg, manifest, name)?;
    serde_json::to_writer_pretty(&mut w, value)
        .with_context(|| format!("serializing {name}"))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_matrix_header(w: &mut impl Write, assets: &[String]) -> Result<()> {
    write!(w, "ticker")?;
    for a in assets {
        write!(w, ",{a}")?;
    }
    writeln!(w)?;
    Ok(())
}

fn write_matrix_csv(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    name: &str,
    matrix: &MiMatrix,
) -> Result<()> {
    let mut w = out_file(cfg, manifest, name)?;
    write_matrix_header(&mut w, &matrix.assets)?;
    for (i, ticker) in matrix.assets.iter().enumerate() {
        write!(w, "{ticker}")?;
        for j in 0..matrix.assets.len() {
            write!(w, ",{}", matrix.mi[[i, j]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_pvalue_csv(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    name: &str,
    matrix: &MiMatrix,
) -> Result<()> {
    let mut w = out_file(cfg, manifest, name)?;
    write_matrix_header(&mut w, &matrix.assets)?;
    for (i, ticker) in matrix.assets.iter().enumerate() {
        write!(w, "{ticker}")?;
        for j in 0..matrix.assets.len() {
            write!(w, ",{}", matrix.pvalues[[i, j]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_mask_csv(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    name: &str,
    matrix: &MiMatrix,
) -> Result<()> {
    let mut w = out_file(cfg, manifest, name)?;
    write_matrix_header(&mut w, &matrix.assets)?;
    for (i, ticker) in matrix.assets.iter().enumerate() {
        write!(w, "{ticker}")?;
        for j in 0..matrix.assets.len() {
            write!(w, ",{}", u8::from(matrix.mask[[i, j]]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, manifest: &mut Manifest) -> Result<()> {
    manifest.outputs.sort();
    manifest.outputs.dedup();
    let path = cfg.out_dir.join("manifest.json");
    let file =
        File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, manifest).context("serializing manifest.json")?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Sweep artifacts: one row per (period, alpha), plus an ordering-stability
/// summary. The per-pair p-values are computed once per period and
/// re-thresholded, so masks are exactly nested across levels; the sweep
/// verifies that instead of assuming it.
#[derive(serde::Serialize)]
struct SweepRow {
    alpha: f64,
    period: String,
    significant_pairs: usize,
    lcc_nodes: usize,
    avg_path_length: Option<f64>,
    avg_weighted_degree: Option<f64>,
    algebraic_connectivity: Option<f64>,
    tree_length: Option<f64>,
    assortativity: Option<f64>,
    global_efficiency: Option<f64>,
}

#[derive(serde::Serialize)]
struct SweepSummary {
    alphas: Vec<f64>,
    /// Exact nesting of masks across ascending levels, checked per period.
    mask_monotone: bool,
    /// metric -> alpha -> ascending period order, e.g. "crash<post<pre".
    orderings: BTreeMap<String, BTreeMap<String, String>>,
    /// metric -> whether every complete level shows the same order.
    stable: BTreeMap<String, bool>,
}

pub fn sweep_alpha(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    if inputs.index.is_none() {
        bail!("sweep-alpha needs a market index; pass --market-index");
    }
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    let requested = [Stage::Hellinger, Stage::Capm, Stage::Network];
    let mut manifest = Manifest::new(cfg, "sweep-alpha", &requested, &inputs);
    let mut phase = "validation".to_string();
    match sweep_body(cfg, &inputs, &mut manifest, &mut phase) {
        Ok(()) => write_manifest(cfg, &mut manifest),
        Err(e) => {
            manifest.status = "FAILED".to_string();
            manifest.failed_stage = Some(phase.clone());
            manifest.error = Some(format!("{e:#}"));
            write_manifest(cfg, &mut manifest)?;
            Err(e.context(format!("stage {phase} failed")))
        }
    }
}

fn sweep_body(
    cfg: &RunConfig,
    inputs: &Inputs,
    manifest: &mut Manifest,
    phase: &mut String,
) -> Result<()> {
    let mut alphas = cfg.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if alphas.is_empty() {
        bail!("no significance levels configured");
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        bail!("significance levels must lie in [0, 1]");
    }

    *phase = "hellinger".to_string();
    let rets = inputs.stocks.log_returns()?;
    let series = rolling_hellinger(&rets, &cfg.hellinger())?;
    let seg = segment(&series, inputs.stocks.dates())?;
    manifest.periods = Some(seg.clone());
    manifest.stages_executed.push("hellinger".to_string());

    *phase = "capm".to_string();
    let index_returns = inputs.index.as_ref().unwrap().log_returns()?;
    let mut residuals: Vec<(Period, ReturnPanel)> = Vec::new();
    for period in Period::ALL {
        let window = seg.window(period);
        let sub = rets.slice(window)?;
        let market: Vec<f64> = index_returns.slice(window)?.column(0).to_vec();
        let (resid, _) = abnormal_returns(&sub, &market)
            .with_context(|| format!("fitting the market model in {}", period.as_str()))?;
        residuals.push((period, resid));
    }
    manifest.stages_executed.push("capm".to_string());

    *phase = "network".to_string();
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut mask_monotone = true;
    // (metric, alpha) -> ordering string, collected across periods first.
    let mut metric_values: BTreeMap<(String, String), Vec<(f64, &'static str)>> = BTreeMap::new();
    for (period, resid) in &residuals {
        let key = period.as_str();
        let seed = stage_seed(cfg.seed, Stage::Network, *period);
        manifest.stage_seeds.insert(format!("network_{key}"), seed);
        let base = cfg.mi(seed);
        let (raw_mi, pvalues) = mi_pvalue_matrix(resid, &base)
            .with_context(|| format!("building the {key} dependency matrix"))?;
        let mut prev_mask: Option<Array2<bool>> = None;
        for &alpha in &alphas {
            let level = MiConfig { alpha, ..base.clone() };
            let matrix = threshold_mi(resid.assets().to_vec(), &raw_mi, &pvalues, &level);
            if let Some(prev) = &prev_mask {
                let nested = prev
                    .iter()
                    .zip(matrix.mask.iter())
                    .all(|(&lo, &hi)| !lo || hi);
                mask_monotone &= nested;
            }
            prev_mask = Some(matrix.mask.clone());

            let graph = to_graph(&matrix);
            let lcc = largest_component(&graph);
            let report = mst_prim(&lcc).ok().and_then(|t| metric_report(&t).ok());
            let short = match period {
                Period::PreCrash => "pre",
                Period::Crash => "crash",
                Period::PostCrash => "post",
            };
            if let Some(r) = &report {
                for (metric, value) in [
                    ("avg_path_length", r.avg_path_length),
                    ("avg_weighted_degree", r.avg_weighted_degree),
                    ("algebraic_connectivity", r.algebraic_connectivity),
                    ("tree_length", r.tree_length),
                ] {
                    metric_values
                        .entry((metric.to_string(), format!("{alpha}")))
                        .or_default()
                        .push((value, short));
                }
            }
            rows.push(SweepRow {
                alpha,
                period: key.to_string(),
                significant_pairs: significant_pairs(&matrix),
                lcc_nodes: lcc.nodes.len(),
                avg_path_length: report.as_ref().map(|r| r.avg_path_length),
                avg_weighted_degree: report.as_ref().map(|r| r.avg_weighted_degree),
                algebraic_connectivity: report.as_ref().map(|r| r.algebraic_connectivity),
                tree_length: report.as_ref().map(|r| r.tree_length),
                assortativity: report.as_ref().map(|r| r.assortativity),
                global_efficiency: report.as_ref().map(|r| r.global_efficiency),
            });
        }
    }
    manifest.stages_executed.push("network".to_string());

    *phase = "sweep".to_string();
    let mut orderings: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut stable: BTreeMap<String, bool> = BTreeMap::new();
    for ((metric, alpha), mut entries) in metric_values {
        let order = if entries.len() == Period::ALL.len() {
            entries.sort_by(|x, y| x.0.total_cmp(&y.0));
            entries
                .iter()
                .map(|(_, p)| *p)
                .collect::<Vec<_>>()
                .join("<")
        } else {
            "incomplete".to_string()
        };
        orderings.entry(metric).or_default().insert(alpha, order);
    }
    for (metric, by_alpha) in &orderings {
        let complete: Vec<&String> = by_alpha
            .values()
            .filter(|o| o.as_str() != "incomplete")
            .collect();
        stable.insert(
            metric.clone(),
            !complete.is_empty() && complete.iter().all(|o| *o == complete[0]),
        );
    }

    let mut w = out_file(cfg, manifest, "sweep.csv")?;
    writeln!(
        w,
        "alpha,period,significant_pairs,lcc_nodes,avg_path_length,avg_weighted_degree,\
         algebraic_connectivity,tree_length,assortativity,global_efficiency"
    )?;
    rows.sort_by(|x, y| {
        x.alpha
            .total_cmp(&y.alpha)
            .then_with(|| x.period.cmp(&y.period))
    });
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.period,
            r.significant_pairs,
            r.lcc_nodes,
            opt(r.avg_path_length),
            opt(r.avg_weighted_degree),
            opt(r.algebraic_connectivity),
            opt(r.tree_length),
            opt(r.assortativity),
            opt(r.global_efficiency)
        )?;
    }
    w.flush()?;
    let summary = SweepSummary {
        alphas,
        mask_monotone,
        orderings,
        stable,
    };
    write_json(cfg, manifest, "sweep_summary.json", &summary)?;
    if !mask_monotone {
        bail!("significance masks are not nested across levels");
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Ground-truth bundle saved next to synthetic panels.
#[derive(serde::Serialize)]
struct TruthFile<'a> {
    spec: &'a SynthSpec,
    truth: &'a GroundTruth,
}

pub fn write_synth(spec: &SynthSpec, out_dir: &Path) -> Result<()> {
    let (stocks, index, truth) = crashnet::synth::generate(spec)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let prices = out_dir.join("prices.csv");
    stocks
        .to_csv(BufWriter::new(File::create(&prices)?))
        .with_context(|| format!("writing {}", prices.display()))?;
    let index_path = out_dir.join("index.csv");
    index
        .to_csv(BufWriter::new(File::create(&index_path)?))
        .with_context(|| format!("writing {}", index_path.display()))?;
    let truth_path = out_dir.join("truth.json");
    let mut w = BufWriter::new(File::create(&truth_path)?);
    serde_json::to_writer_pretty(&mut w, &TruthFile { spec, truth: &truth })
        .context("serializing truth.json")?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
