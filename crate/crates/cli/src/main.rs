use std::process::ExitCode;

fn main() -> ExitCode {
    let result = ovmot_cli::configure_threads().and_then(|_| ovmot_cli::run(std::env::args_os(), &mut std::io::stdout()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
