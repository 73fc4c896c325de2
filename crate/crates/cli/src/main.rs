use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match volscale_cli::run(std::env::args_os()) {
        Ok(outcome) => {
            for name in &outcome.outputs {
                println!("{}", outcome.path(name).display());
            }
            if let Some(m) = &outcome.manifest {
                println!("{}", m.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = volscale_cli::exit_code(&err);
            match err.downcast_ref::<clap::Error>() {
                Some(e) => {
                    let _ = e.print();
                }
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(code as u8)
        }
    }
}
