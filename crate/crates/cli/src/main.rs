use std::process::ExitCode;

fn main() -> ExitCode {
    match gse_cli::main_with(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(gse_cli::CliError::Clap(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
