//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 bad input, 3 grid count
//! mismatch, 4 edge conservation violation, 5 raster coverage too low.
//! Diagnostics go to stderr; data goes to files or stdout.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::batch::{self, BatchConfig, BatchError};
use crate::fusion::{self, FusionError, FusionOptions, Sampling, DEFAULT_NODATA_THRESHOLD};
use crate::geo::GeoPoint;
use crate::graph::parse_geojson;
use crate::output::write_atomic;
use crate::raster::parse_ascii_grid;
use crate::rasterizer::{self, CenterList, GridSpec, RasterizeError};
use crate::verify::{self, LatticeFn};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COUNT: i32 = 3;
pub const EXIT_CONSERVATION: i32 = 4;
pub const EXIT_COVERAGE: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "gridfuse",
    version,
    about = "Rasterise city maps into grids and fuse raster features onto road edges"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute grid centres for one city and write them as a lat,lon CSV.
    Rasterize(RasterizeArgs),
    /// Assign raster values to the edges of one city's road graph.
    Fuse(FuseArgs),
    /// Rasterise and fuse every city of a city list.
    Batch(BatchArgs),
    /// Generate synthetic cities (graph, raster and city list).
    Gen(GenArgs),
    /// Check rasterisation invariants against the meshgrid oracle.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CityArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub center_lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub center_lon: f64,
    /// City side length A in metres.
    #[arg(long)]
    pub size_m: f64,
    /// Raster resolution r in metres.
    #[arg(long)]
    pub resolution_m: f64,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    #[command(flatten)]
    pub city: CityArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Use floating-degree expansion with duplicates found at this many decimals.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=9))]
    pub decimals: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplingArg {
    BoxMean,
    CenterPoint,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::BoxMean => Sampling::BoxMean,
            SamplingArg::CenterPoint => Sampling::CenterPoint,
        }
    }
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub city: CityArgs,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long, default_value = "value")]
    pub feature: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "city")]
    pub city_id: String,
    /// Append the report line to this file as well as printing it.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "box-mean")]
    pub sampling: SamplingArg,
    #[arg(long, default_value_t = DEFAULT_NODATA_THRESHOLD)]
    pub nodata_threshold: f64,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// CSV with header city_id,lat,lon,size_m,graph_path[,raster_path].
    #[arg(long)]
    pub cities: PathBuf,
    #[arg(long)]
    pub resolution_m: f64,
    /// Feature names, paired in order with --raster.
    #[arg(long)]
    pub feature: Vec<String>,
    #[arg(long)]
    pub raster: Vec<PathBuf>,
    /// Output directory for fused graphs and reports.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[arg(long, value_enum, default_value = "box-mean")]
    pub sampling: SamplingArg,
    #[arg(long, default_value_t = DEFAULT_NODATA_THRESHOLD)]
    pub nodata_threshold: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub size_m: f64,
    #[arg(long)]
    pub resolution_m: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub edges_per_cell: usize,
    /// Number of cities; seeds run from --seed upwards.
    #[arg(long, default_value_t = 1)]
    pub count: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 41, value_parser = clap::value_parser!(u64).range(1..=1000))]
    pub max_s: u64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }
}

impl From<RasterizeError> for CliError {
    fn from(e: RasterizeError) -> Self {
        let code = match e {
            RasterizeError::CountMismatch { .. } => EXIT_COUNT,
            _ => EXIT_INPUT,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        let code = match e {
            FusionError::ConservationViolation { .. } => EXIT_CONSERVATION,
            FusionError::RasterCoverage { .. } => EXIT_COVERAGE,
            FusionError::SpecMismatch { .. } => EXIT_COUNT,
            _ => EXIT_INPUT,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Rasterize(e) => e.into(),
            BatchError::Fusion(e) => e.into(),
            other => CliError::input(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

fn spec_summary(spec: &GridSpec) -> String {
    format!(
        "s={} G={} parity={} i_total={} i_vir={} b_real_m={} b_vir_m={}",
        spec.s, spec.g, spec.parity, spec.i_total, spec.i_vir, spec.b_real_m, spec.b_vir_m
    )
}

fn city_center(args: &CityArgs) -> Result<GeoPoint, CliError> {
    GeoPoint::new(args.center_lat, args.center_lon).map_err(|e| CliError::input(e.to_string()))
}

fn print_layers(centers: &CenterList) {
    let counts: Vec<String> = centers.virtual_counts.iter().map(u64::to_string).collect();
    println!("virtual layers: [{}]", counts.join(", "));
}

pub fn cmd_rasterize(args: &RasterizeArgs) -> Result<(), CliError> {
    let center = city_center(&args.city)?;
    let spec = rasterizer::derive_spec(args.city.size_m, args.city.resolution_m)?;
    println!("{}", spec_summary(&spec));
    let result = match args.decimals {
        Some(d) => rasterizer::rasterize_quantized(center, &spec, d),
        None => rasterizer::rasterize(center, &spec),
    };
    let centers = match result {
        Ok(c) => c,
        Err(RasterizeError::CountMismatch { expected, got }) => {
            println!("#latlon == G: {got} != {expected} FAIL");
            return Err(RasterizeError::CountMismatch { expected, got }.into());
        }
        Err(e) => return Err(e.into()),
    };
    print_layers(&centers);
    println!("#latlon == G: {} == {} OK", centers.len(), spec.g);

    let mut buf = Vec::new();
    centers
        .write_csv(&mut buf)
        .map_err(|e| io_err(&args.out, e))?;
    write_atomic(&args.out, &buf).map_err(|e| io_err(&args.out, e))
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<(), CliError> {
    let center = city_center(&args.city)?;
    let spec = rasterizer::derive_spec(args.city.size_m, args.city.resolution_m)?;
    let centers = rasterizer::rasterize(center, &spec)?;

    let file = File::open(&args.graph).map_err(|e| io_err(&args.graph, e))?;
    let graph = parse_geojson(BufReader::new(file)).map_err(|e| io_err(&args.graph, e))?;
    let file = File::open(&args.raster).map_err(|e| io_err(&args.raster, e))?;
    let raster = parse_ascii_grid(BufReader::new(file)).map_err(|e| io_err(&args.raster, e))?;

    let options = FusionOptions {
        sampling: args.sampling.into(),
        nodata_threshold: args.nodata_threshold,
    };
    let (fused, report) = fusion::fuse(
        graph,
        &raster,
        &centers,
        &spec,
        &args.feature,
        &args.city_id,
        &options,
    )?;

    write_atomic(&args.out, fused.to_geojson_string().as_bytes())
        .map_err(|e| io_err(&args.out, e))?;
    let line = report.to_json_line();
    if let Some(path) = &args.report {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        writeln!(f, "{line}").map_err(|e| io_err(path, e))?;
    }
    println!("{line}");
    Ok(())
}

pub fn cmd_batch(args: &BatchArgs) -> Result<(), CliError> {
    if args.feature.len() != args.raster.len() {
        return Err(CliError::input(format!(
            "--feature given {} times but --raster {} times",
            args.feature.len(),
            args.raster.len()
        )));
    }
    let features: Vec<(String, PathBuf)> = args
        .feature
        .iter()
        .cloned()
        .zip(args.raster.iter().cloned())
        .collect();
    let cities = batch::read_city_list(&args.cities, &features)?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;

    let config = BatchConfig {
        r_m: args.resolution_m,
        parallelism: args.parallelism.max(1),
        fusion: FusionOptions {
            sampling: args.sampling.into(),
            nodata_threshold: args.nodata_threshold,
        },
        out_dir: Some(args.out.clone()),
    };
    let outcomes = batch::run_batch(&cities, &config);

    let mut buf = Vec::new();
    batch::write_json_lines(&outcomes, &mut buf).expect("writing to memory");
    let reports = args.out.join("reports.jsonl");
    write_atomic(&reports, &buf).map_err(|e| io_err(&reports, e))?;
    std::io::stdout()
        .write_all(&buf)
        .map_err(|e| CliError::input(e.to_string()))?;

    let failed = outcomes.iter().filter(|o| !o.is_ok()).count();
    eprintln!(
        "{} cities, {} ok, {} failed",
        outcomes.len(),
        outcomes.len() - failed,
        failed
    );
    Ok(())
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let mut csv = String::from("city_id,lat,lon,size_m,graph_path,raster_path\n");
    for seed in args.seed..args.seed + args.count {
        let (city, record) = batch::gen_synthetic(
            seed,
            args.size_m,
            args.resolution_m,
            args.edges_per_cell,
            &args.out,
        )?;
        let file_name = |p: &Path| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            record.city_id,
            record.center.lat,
            record.center.lon,
            record.a_m,
            file_name(&record.graph_path),
            file_name(&record.features[0].1),
        ));
        println!(
            "{}: {} edges, {}",
            record.city_id,
            city.graph.edge_count(),
            spec_summary(&city.spec)
        );
    }
    let list = args.out.join("cities.csv");
    write_atomic(&list, csv.as_bytes()).map_err(|e| io_err(&list, e))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    cmd_verify_with(args.max_s, rasterizer::rasterize_offsets)
}

/// [`cmd_verify`] with an injectable lattice builder.
pub fn cmd_verify_with(max_s: u64, lattice: LatticeFn) -> Result<(), CliError> {
    let start = std::time::Instant::now();
    let report = verify::run_sweep(max_s, lattice);
    for f in &report.failures {
        eprintln!("FAIL {f}");
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "oracle equivalence and perfect-square growth, s = 1..={max_s}: {} cases, {} failures, {:.3} s: {verdict}",
        report.cases,
        report.failures.len(),
        start.elapsed().as_secs_f64()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_VERIFY,
            format!("{} invariant failures", report.failures.len()),
        ))
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Rasterize(a) => cmd_rasterize(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
