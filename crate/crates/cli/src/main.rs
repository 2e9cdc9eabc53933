use std::process::ExitCode;

use clap::Parser;

use vrp2l::generate::{generate_instance, GeneratorConfig};
use vrp2l_cli::args::{BenchArgs, Cli, Command, Matrix};
use vrp2l_cli::bench::{grid24, run_bench, wb_nb};
use vrp2l_cli::{
    cmd_gen, cmd_oracle, cmd_solve, cmd_validate, read_instance, CliResult, RunConfig, EXIT_INFEASIBLE, EXIT_INPUT,
};

fn bench(args: &BenchArgs) -> CliResult<()> {
    let instances = match &args.instance {
        Some(path) => vec![(args.solver.seed, read_instance(path)?.0)],
        None => args
            .seeds
            .iter()
            .map(|&s| Ok((s, generate_instance(&GeneratorConfig::sized(s, args.shipments))?)))
            .collect::<CliResult<Vec<_>>>()?,
    };
    let base = args.solver.params();
    let combos = match args.matrix {
        Matrix::Grid24 => grid24(&base),
        Matrix::WbNb => wb_nb(&base),
    };
    let report = run_bench(&instances, &combos, args.parallel, Some(&args.out))?;
    print!("{}", report.table());
    if let Some(s) = report.spread() {
        println!("spread of final mileage: {s:.2}");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Gen(args) => {
            cmd_gen(&args.config(), args.out.as_deref())?;
        }
        Command::Solve(args) => {
            let (instance, hash) = read_instance(&args.instance)?;
            let config = RunConfig {
                instance: args.instance.clone(),
                instance_sha256: hash,
                seed: args.solver.seed,
                params: args.solver.params(),
                output_dir: args.out.clone(),
            };
            let (_, summary) = cmd_solve(&instance, &config)?;
            println!("{summary}");
        }
        Command::Bench(args) => bench(&args)?,
        Command::Oracle(args) => {
            let (instance, _) = read_instance(&args.instance)?;
            let solution = cmd_oracle(&instance, args.out.as_deref())?;
            println!(
                "optimal mileage {:.2} with {} trucks",
                solution.total_mileage,
                solution.used_trucks()
            );
        }
        Command::Validate(args) => {
            let (instance, _) = read_instance(&args.instance)?;
            let violations = cmd_validate(&instance, &args.solution)?;
            if violations.is_empty() {
                println!("feasible");
            } else {
                for v in &violations {
                    println!("{v}");
                }
                return Ok(EXIT_INFEASIBLE as u8);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as input errors; help and version succeed.
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
