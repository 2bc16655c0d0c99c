use std::process::ExitCode;

fn main() -> ExitCode {
    if let Ok(value) = std::env::var("STORYPLAN_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not size the worker pool: {e}");
                }
            }
            _ => {
                eprintln!("error: STORYPLAN_THREADS must be a positive integer, got '{value}'");
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::from(storyplan_cli::run(std::env::args_os()) as u8)
}
