//! Numeric matrix and vector files, experiment config files, and csv
//! writers for result tables.
//!
//! Matrices are one observation per row, either comma separated or
//! whitespace separated. A first row that does not parse as numbers is taken
//! as a header and skipped. Values are written with the shortest
//! representation that parses back to the same `f64`, so save/load round
//! trips are exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::sim::{
    BetaPattern, Correlation, DataSpec, Dataset, GenotypeSpec, Link, Method, MetricReport,
    ScenarioSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixFormat {
    #[default]
    Csv,
    Whitespace,
}

impl MatrixFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Whitespace => "txt",
        }
    }

    fn separator(&self) -> &'static str {
        match self {
            MatrixFormat::Csv => ",",
            MatrixFormat::Whitespace => " ",
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "ws" | "whitespace" => Ok(MatrixFormat::Whitespace),
            _ => Err(Error::InvalidInput(format!("unknown matrix format '{s}'"))),
        }
    }
}

/// Accumulates parsed rows into one flat buffer.
struct RowSink {
    values: Vec<f64>,
    width: Option<usize>,
    rows: usize,
    seen_first: bool,
}

impl RowSink {
    fn new() -> Self {
        Self {
            values: Vec::new(),
            width: None,
            rows: 0,
            seen_first: false,
        }
    }

    fn push<'a>(&mut self, line: usize, fields: impl Iterator<Item = &'a str>) -> Result<()> {
        let start = self.values.len();
        let first = !self.seen_first;
        self.seen_first = true;
        for (col, field) in fields.enumerate() {
            let field = field.trim();
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => self.values.push(v),
                Ok(_) => {
                    return Err(Error::Parse {
                        line,
                        column: col + 1,
                        message: format!("non-finite value '{field}'"),
                    })
                }
                Err(_) if first => {
                    // header row
                    self.values.truncate(start);
                    return Ok(());
                }
                Err(_) => {
                    return Err(Error::Parse {
                        line,
                        column: col + 1,
                        message: format!("'{field}' is not a number"),
                    })
                }
            }
        }
        let found = self.values.len() - start;
        match self.width {
            None => self.width = Some(found),
            Some(expected) if expected != found => {
                return Err(Error::RaggedRows { line, expected, found })
            }
            _ => {}
        }
        self.rows += 1;
        Ok(())
    }

    fn finish(self) -> Result<Array2<f64>> {
        match self.width {
            Some(w) if self.rows > 0 && w > 0 => Ok(Array2::from_shape_vec((self.rows, w), self.values)
                .expect("row widths were checked")),
            _ => Err(Error::EmptyFile),
        }
    }
}

/// Parse a matrix, one row at a time.
pub fn read_matrix<R: Read>(reader: R, format: MatrixFormat) -> Result<Array2<f64>> {
    let mut sink = RowSink::new();
    match format {
        MatrixFormat::Csv => {
            let mut csv = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .from_reader(reader);
            let mut record = csv::StringRecord::new();
            loop {
                match csv.read_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {}
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line() as usize);
                        return Err(Error::Parse {
                            line,
                            column: 0,
                            message: e.to_string(),
                        });
                    }
                }
                let line = record.position().map_or(0, |p| p.line() as usize);
                if record.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                sink.push(line, record.iter())?;
            }
        }
        MatrixFormat::Whitespace => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                sink.push(i + 1, line.split_whitespace())?;
            }
        }
    }
    sink.finish()
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<Array2<f64>> {
    read_matrix(File::open(path)?, format)
}

pub fn write_matrix<W: Write>(writer: W, x: ArrayView2<f64>, format: MatrixFormat) -> Result<()> {
    let mut out = BufWriter::new(writer);
    let sep = format.separator();
    for row in x.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(sep.as_bytes())?;
            }
            first = false;
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_matrix(path: impl AsRef<Path>, x: ArrayView2<f64>, format: MatrixFormat) -> Result<()> {
    write_matrix(File::create(path)?, x, format)
}

/// A one-value-per-line vector; an optional header line is skipped.
pub fn load_vector(path: impl AsRef<Path>, format: MatrixFormat) -> Result<Array1<f64>> {
    let m = load_matrix(path, format)?;
    if m.ncols() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: m.ncols(),
        });
    }
    Ok(m.column(0).to_owned())
}

pub fn save_vector(path: impl AsRef<Path>, v: ArrayView1<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(out, "{x}")?;
    }
    out.flush()?;
    Ok(())
}

/// Write the training and test parts of a simulated dataset, plus the true
/// coefficients, into `dir` as `x_train`, `y_train`, `x_test`, `y_test` and
/// `beta` files.
pub fn save_dataset(dir: impl AsRef<Path>, data: &Dataset, format: MatrixFormat) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let ext = format.extension();
    save_matrix(dir.join(format!("x_train.{ext}")), data.x_train.view(), format)?;
    save_matrix(dir.join(format!("x_test.{ext}")), data.x_test.view(), format)?;
    save_vector(dir.join(format!("y_train.{ext}")), data.y_train.view())?;
    save_vector(dir.join(format!("y_test.{ext}")), data.y_test.view())?;
    save_vector(dir.join(format!("beta.{ext}")), data.beta.view())?;
    Ok(())
}

/// Method results as csv: `method,metric,replicates,failures,mean,std_error`.
pub fn write_metric_reports<W: Write>(writer: W, reports: &[MetricReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["method", "metric", "replicates", "failures", "mean", "std_error"])
        .map_err(csv_error)?;
    for r in reports {
        out.write_record([
            r.method.clone(),
            r.metric.to_string(),
            r.replicates().to_string(),
            r.failures.len().to_string(),
            r.mean.to_string(),
            r.std_error.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidInput(format!("{other:?}")),
    }
}

/// A simulation experiment: which data to generate, how many replicates,
/// and which methods to compare.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub replicates: usize,
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    /// Ten replicates of the ridge rules and the univariate baselines.
    pub fn new(data: DataSpec) -> Self {
        let mut methods = vec![Method::RidgeDofF];
        if data.link() == Link::Identity {
            methods.push(Method::RidgePress { folds: 10 });
        }
        methods.push(Method::RidgeMax);
        for proportion in [0.001, 0.005, 0.01, 0.03] {
            methods.push(Method::Univariate {
                proportion,
                ld_prune_r2: 0.9,
            });
        }
        Self {
            data,
            replicates: 10,
            methods,
        }
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Entries {
    map: HashMap<String, Entry>,
    /// Line of the `kind` key, used for errors that involve several keys.
    anchor: usize,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("cannot parse '{v}' as a value for {key}"),
            }),
        }
    }

    fn with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => f(&v).map(Some).map_err(|message| Error::Config {
                line,
                message: format!("{key}: {message}"),
            }),
        }
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let anchor = self.anchor;
        self.parse(key)?.ok_or_else(|| Error::Config {
            line: anchor,
            message: format!("missing key '{key}'"),
        })
    }

    fn unused(&self) -> Option<(usize, &str)> {
        self.map
            .iter()
            .filter(|(_, e)| !e.used)
            .map(|(k, e)| (e.line, k.as_str()))
            .min()
    }
}

fn split_config(text: &str) -> Result<Entries> {
    let mut map: HashMap<String, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected 'key = value', found '{content}'"),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                message: "empty key".into(),
            });
        }
        if let Some(prev) = map.get(&key) {
            return Err(Error::Config {
                line,
                message: format!("key '{key}' already set on line {}", prev.line),
            });
        }
        map.insert(
            key,
            Entry {
                line,
                value: value.trim().to_string(),
                used: false,
            },
        );
    }
    let anchor = map.get("kind").map_or(1, |e| e.line);
    Ok(Entries { map, anchor })
}

/// Split `name(a, b, c)` into `name` and its arguments.
fn call(v: &str) -> (String, Vec<String>) {
    match v.split_once('(') {
        Some((name, rest)) => {
            let args = rest.trim_end().trim_end_matches(')');
            let args = args
                .split(',')
                .map(|a| a.trim().to_string())
                .filter(|a| !a.is_empty())
                .collect();
            (name.trim().to_string(), args)
        }
        None => (v.trim().to_string(), Vec::new()),
    }
}

fn number(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("'{s}' is not a number"))
}

fn parse_link(v: &str) -> Result<Link, String> {
    match v {
        "identity" | "linear" => Ok(Link::Identity),
        "logistic" => Ok(Link::Logistic),
        _ => Err(format!("unknown link '{v}' (expected identity or logistic)")),
    }
}

fn parse_pair(v: &str) -> Result<(f64, f64), String> {
    match v.split(',').collect::<Vec<_>>()[..] {
        [a, b] => Ok((number(a)?, number(b)?)),
        _ => Err(format!("expected two comma-separated numbers, found '{v}'")),
    }
}

fn parse_beta_pattern(v: &str) -> Result<BetaPattern, String> {
    let (name, args) = call(v);
    match name.as_str() {
        "explicit" => Ok(BetaPattern::Explicit(
            args.iter().map(|a| number(a)).collect::<Result<_, _>>()?,
        )),
        "constant" if args.len() == 1 => Ok(BetaPattern::Constant(number(&args[0])?)),
        "ones" => args
            .iter()
            .map(|a| {
                let (lo, hi) = a.split_once('-').unwrap_or((a, a));
                let bound = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad column range '{a}'"));
                Ok((bound(lo)?, bound(hi)?))
            })
            .collect::<Result<_, String>>()
            .map(BetaPattern::Ones),
        _ => Err(format!(
            "expected explicit(..), constant(c) or ones(a-b, ..), found '{v}'"
        )),
    }
}

fn parse_correlation(v: &str) -> Result<Correlation, String> {
    let (name, args) = call(v);
    match (name.as_str(), args.len()) {
        ("independent", 0) => Ok(Correlation::Independent),
        ("autoregressive", 1) => Ok(Correlation::Autoregressive(number(&args[0])?)),
        ("constant", 1) => Ok(Correlation::Constant(number(&args[0])?)),
        ("latent", 3) => {
            let count = |s: &str| s.parse::<usize>().map_err(|_| format!("'{s}' is not a count"));
            Ok(Correlation::Latent {
                groups: count(&args[0])?,
                size: count(&args[1])?,
                noise_sd: number(&args[2])?,
            })
        }
        _ => Err(format!(
            "expected independent, autoregressive(rho), constant(rho) or latent(groups, size, noise_sd), found '{v}'"
        )),
    }
}

fn parse_methods(v: &str) -> Result<Vec<Method>, String> {
    let methods = v
        .split(',')
        .map(|m| Method::parse(m.trim()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err("no methods listed".into());
    }
    Ok(methods)
}

fn scenario_from(e: &mut Entries) -> Result<ScenarioSpec> {
    let mut spec = match e.parse::<usize>("preset")? {
        Some(n) => ScenarioSpec::table1(n).map_err(|err| Error::Config {
            line: e.map["preset"].line,
            message: err.to_string(),
        })?,
        None => {
            let n_train = e.required("n_train")?;
            ScenarioSpec {
                name: "custom".into(),
                n_train,
                n_test: n_train,
                p: e.required("p")?,
                beta_pattern: BetaPattern::Constant(0.0),
                correlation_structure: Correlation::Independent,
                noise_sigma: e.required("noise_sigma")?,
                link: Link::Identity,
                intercept: 0.0,
                seed: 0,
            }
        }
    };
    let preset = e.map.contains_key("preset");
    if let Some(v) = e.parse("name")? {
        spec.name = v;
    }
    if let Some(v) = e.parse("n_train")? {
        spec.n_train = v;
        if !preset {
            spec.n_test = v;
        }
    }
    if let Some(v) = e.parse("n_test")? {
        spec.n_test = v;
    }
    if let Some(v) = e.parse("p")? {
        spec.p = v;
    }
    match e.with("beta_pattern", parse_beta_pattern)? {
        Some(v) => spec.beta_pattern = v,
        None if !preset => {
            return Err(Error::Config {
                line: e.anchor,
                message: "missing key 'beta_pattern'".into(),
            })
        }
        None => {}
    }
    if let Some(v) = e.with("correlation_structure", parse_correlation)? {
        spec.correlation_structure = v;
    }
    if let Some(v) = e.parse("noise_sigma")? {
        spec.noise_sigma = v;
    }
    if let Some(v) = e.with("link", parse_link)? {
        spec.link = v;
    }
    if let Some(v) = e.parse("intercept")? {
        spec.intercept = v;
    }
    if let Some(v) = e.parse("seed")? {
        spec.seed = v;
    }
    Ok(spec)
}

fn genotype_from(e: &mut Entries) -> Result<GenotypeSpec> {
    let link = e.with("link", parse_link)?.unwrap_or(Link::Identity);
    let mut spec = GenotypeSpec::desk(link);
    macro_rules! field {
        ($($name:ident),*) => {
            $(if let Some(v) = e.parse(stringify!($name))? {
                spec.$name = v;
            })*
        };
    }
    field!(
        p,
        n_causal,
        haplotype_pool_size,
        ld_block_length,
        founders_per_block,
        switch_rate,
        mutation_rate,
        n_train,
        n_test,
        noise_sigma,
        intercept,
        seed
    );
    if let Some(v) = e.with("maf_range", parse_pair)? {
        spec.maf_range = v;
    }
    if let Some(v) = e.with("effect_range", parse_pair)? {
        spec.effect_range = v;
    }
    Ok(spec)
}

/// Parse a `key = value` experiment config. `kind` is `scenario` or
/// `genotype`. Scenario keys are the [`ScenarioSpec`] fields, optionally
/// starting from `preset = 1..4`; genotype keys are the [`GenotypeSpec`]
/// fields, defaulting to [`GenotypeSpec::desk`]. `replicates` and `methods`
/// (comma-separated method labels) are optional. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut e = split_config(text)?;
    let anchor = e.anchor;
    let kind: String = e.required("kind")?;
    let data = match kind.as_str() {
        "scenario" => DataSpec::Scenario(scenario_from(&mut e)?),
        "genotype" => DataSpec::Genotype(genotype_from(&mut e)?),
        other => {
            return Err(Error::Config {
                line: anchor,
                message: format!("unknown kind '{other}' (expected scenario or genotype)"),
            })
        }
    };
    let validation = match &data {
        DataSpec::Scenario(s) => s.validate(),
        DataSpec::Genotype(g) => g.validate(),
    };
    validation.map_err(|err| Error::Config {
        line: anchor,
        message: err.to_string(),
    })?;
    let mut config = ExperimentConfig::new(data);
    if let Some(r) = e.parse::<usize>("replicates")? {
        if r == 0 {
            return Err(Error::Config {
                line: e.map["replicates"].line,
                message: "replicates must be at least 1".into(),
            });
        }
        config.replicates = r;
    }
    if let Some(m) = e.with("methods", parse_methods)? {
        config.methods = m;
    }
    if let Some((line, key)) = e.unused() {
        return Err(Error::Config {
            line,
            message: format!("unknown key '{key}' for kind {kind}"),
        });
    }
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn link_name(link: Link) -> &'static str {
    match link {
        Link::Identity => "identity",
        Link::Logistic => "logistic",
    }
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(", ")
}

/// Write a config that [`parse_config`] reads back to the same experiment.
/// Every field is written explicitly.
pub fn format_config(config: &ExperimentConfig) -> String {
    let mut s = String::new();
    match &config.data {
        DataSpec::Scenario(spec) => {
            let beta = match &spec.beta_pattern {
                BetaPattern::Explicit(v) => format!("explicit({})", join(v.iter().map(f64::to_string))),
                BetaPattern::Constant(c) => format!("constant({c})"),
                BetaPattern::Ones(r) => format!("ones({})", join(r.iter().map(|(a, b)| format!("{a}-{b}")))),
            };
            let corr = match spec.correlation_structure {
                Correlation::Independent => "independent".to_string(),
                Correlation::Autoregressive(r) => format!("autoregressive({r})"),
                Correlation::Constant(r) => format!("constant({r})"),
                Correlation::Latent { groups, size, noise_sd } => format!("latent({groups}, {size}, {noise_sd})"),
            };
            let _ = writeln!(s, "kind = scenario");
            let _ = writeln!(s, "name = {}", spec.name);
            let _ = writeln!(s, "n_train = {}", spec.n_train);
            let _ = writeln!(s, "n_test = {}", spec.n_test);
            let _ = writeln!(s, "p = {}", spec.p);
            let _ = writeln!(s, "beta_pattern = {beta}");
            let _ = writeln!(s, "correlation_structure = {corr}");
            let _ = writeln!(s, "noise_sigma = {}", spec.noise_sigma);
            let _ = writeln!(s, "link = {}", link_name(spec.link));
            let _ = writeln!(s, "intercept = {}", spec.intercept);
            let _ = writeln!(s, "seed = {}", spec.seed);
        }
        DataSpec::Genotype(g) => {
            let _ = writeln!(s, "kind = genotype");
            let _ = writeln!(s, "p = {}", g.p);
            let _ = writeln!(s, "n_causal = {}", g.n_causal);
            let _ = writeln!(s, "maf_range = {}, {}", g.maf_range.0, g.maf_range.1);
            let _ = writeln!(s, "effect_range = {}, {}", g.effect_range.0, g.effect_range.1);
            let _ = writeln!(s, "haplotype_pool_size = {}", g.haplotype_pool_size);
            let _ = writeln!(s, "ld_block_length = {}", g.ld_block_length);
            let _ = writeln!(s, "founders_per_block = {}", g.founders_per_block);
            let _ = writeln!(s, "switch_rate = {}", g.switch_rate);
            let _ = writeln!(s, "mutation_rate = {}", g.mutation_rate);
            let _ = writeln!(s, "n_train = {}", g.n_train);
            let _ = writeln!(s, "n_test = {}", g.n_test);
            let _ = writeln!(s, "noise_sigma = {}", g.noise_sigma);
            let _ = writeln!(s, "link = {}", link_name(g.link));
            let _ = writeln!(s, "intercept = {}", g.intercept);
            let _ = writeln!(s, "seed = {}", g.seed);
        }
    }
    let _ = writeln!(s, "replicates = {}", config.replicates);
    let _ = writeln!(s, "methods = {}", join(config.methods.iter().map(Method::label)));
    s
}
