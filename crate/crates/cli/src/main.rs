use std::io::Write;

fn main() {
    let (out, code) = vna_cli::run(std::env::args_os());
    let _ = std::io::stdout().write_all(out.as_bytes());
    std::process::exit(code);
}
