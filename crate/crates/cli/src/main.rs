use std::process::ExitCode;

fn main() -> ExitCode {
    match cera_cli::run(std::env::args().skip(1)) {
        Ok(report) => {
            for path in &report.outputs {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", report.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) if e.code == 0 => {
            print!("{}", e.message);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            ExitCode::from(e.code as u8)
        }
    }
}
