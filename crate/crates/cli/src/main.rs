use boxpose_cli::args::{Cli, Command};
use boxpose_cli::{commands, EXIT_INPUT};
use clap::Parser;

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenScene(args) => commands::cmd_gen_scene(args),
        Command::DetectEdges(args) => commands::cmd_detect_edges(args),
        Command::ExtractLines(args) => commands::cmd_extract_lines(args),
        Command::EstimatePose(args) => commands::cmd_estimate_pose(args),
        Command::CompareBaseline(args) => commands::cmd_compare_baseline(args),
        Command::PlanPick(args) => commands::cmd_plan_pick(args),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    };
    std::process::exit(code);
}
