//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vrp2l::generate::GeneratorConfig;
use vrp2l::tabu::Budget;
use vrp2l::SolveParams;

#[derive(Debug, Parser)]
#[command(name = "vrp2l", version, about = "Routing and 2D loading of inbound shipments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance.
    Gen(GenArgs),
    /// Construct, improve and post-optimise a solution.
    Solve(SolveArgs),
    /// Run a parameter matrix and rank the final mileages.
    Bench(BenchArgs),
    /// Solve a tiny instance exactly.
    Oracle(OracleArgs),
    /// Check a solution document against its instance.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 311 shipments, 45 suppliers, 8 warehouses.
    Paper,
    /// Scaled from `--shipments`.
    Sized,
    /// Two suppliers, one warehouse, for the exact solver.
    Tiny,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "sized")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub shipments: usize,
    /// Fleet size for the tiny preset.
    #[arg(long, default_value_t = 3)]
    pub trucks: usize,
    #[arg(long, default_value_t = 0)]
    pub hub_shipments: usize,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

impl GenArgs {
    pub fn config(&self) -> GeneratorConfig {
        let mut c = match self.preset {
            Preset::Paper => GeneratorConfig::paper_scale(self.seed),
            Preset::Sized => GeneratorConfig::sized(self.seed, self.shipments),
            Preset::Tiny => GeneratorConfig::tiny(self.seed, self.shipments, self.trucks),
        };
        c.n_hub_shipments = self.hub_shipments;
        c
    }
}

/// Solver settings shared by `solve` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Wall-clock budget of the tabu search.
    #[arg(long, default_value_t = 60.0, conflicts_with = "iterations")]
    pub budget_seconds: f64,
    /// Iteration budget instead of seconds; reruns are then identical.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Tabu tenure; defaults to the square root of the bundle count.
    #[arg(long)]
    pub tenure: Option<usize>,
    /// Largest bundle; bigger shipment groups are split.
    #[arg(long)]
    pub bundle_threshold: Option<usize>,
    /// Move shipments one at a time.
    #[arg(long)]
    pub no_bundle: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub cluster_radius_scale: f64,
    #[arg(long)]
    pub no_postopt: bool,
    /// Largest covered fraction of the surface worth packing.
    #[arg(long)]
    pub pack_threshold: Option<f64>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// Packing score weights `w1,w2,w3`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub pack_weights: Option<Vec<f64>>,
    /// Search nodes per route before the best route so far is kept.
    #[arg(long)]
    pub route_node_budget: Option<usize>,
}

impl SolverArgs {
    pub fn params(&self) -> SolveParams {
        let mut p = SolveParams::default();
        let route = &mut p.tabu.route;
        if let Some(t) = self.pack_threshold {
            route.pack.threshold = t;
        }
        if let Some(b) = self.beam_width {
            route.pack.beam_width = b;
        }
        if let Some(w) = &self.pack_weights {
            route.pack.weights = [w[0], w[1], w[2]];
        }
        if let Some(n) = self.route_node_budget {
            route.node_budget = n;
        }
        p.construct.route = p.tabu.route;
        p.construct.radius_scale = self.cluster_radius_scale;
        p.tabu.budget = match self.iterations {
            Some(n) => Budget::Iterations(n),
            None => Budget::Seconds(self.budget_seconds),
        };
        p.tabu.tenure = self.tenure;
        p.tabu.bundle_threshold = self.bundle_threshold;
        p.tabu.bundling = !self.no_bundle;
        p.postopt = !self.no_postopt;
        p
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    /// Directory for the solution, convergence log, summary and run record.
    #[arg(short, long, default_value = "run")]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Matrix {
    /// Tenure × bundle threshold × cluster radius: 24 combinations.
    Grid24,
    /// With and without bundling.
    WbNb,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Instance to run on; when absent, one instance per seed is generated.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Size of generated instances.
    #[arg(long, default_value_t = 50)]
    pub shipments: usize,
    /// Generator seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, default_value = "grid24")]
    pub matrix: Matrix,
    /// Runs executed at the same time.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(short, long, default_value = "bench")]
    pub out: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub instance: PathBuf,
    /// Where to write the optimal solution.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub instance: PathBuf,
    pub solution: PathBuf,
}
