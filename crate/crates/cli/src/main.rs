use clap::{Parser, Subcommand};

use lossforge::commands::{compare, eval, search, shape, train};
use lossforge::parallel;

#[derive(Parser)]
#[command(
    name = "lossforge",
    version,
    about = "Evolve, train, and analyze GAN loss functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve loss expressions with genetic programming
    Search(search::SearchArgs),
    /// Score one loss across repeated GAN trainings
    Eval(eval::EvalArgs),
    /// Tabulate a loss curve and find its minimum over [0,1]
    Shape(shape::ShapeArgs),
    /// Train GANs for several losses and tabulate the results
    Compare(compare::CompareArgs),
    /// Train one GAN and dump its history and samples
    Train(train::TrainArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = parallel::init_thread_pool().and_then(|()| match cli.command {
        Command::Search(args) => search::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Shape(args) => shape::run(args),
        Command::Compare(args) => compare::run(args),
        Command::Train(args) => train::run(args),
    });
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
