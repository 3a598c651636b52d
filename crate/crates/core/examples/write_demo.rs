//! Writes the offline demo directory: `cargo run -p tabqa-core --example write_demo -- <dir>`.

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".to_string());
    match tabqa_core::harness::demo::write_demo(std::path::Path::new(&dir)) {
        Ok(layout) => println!("demo written; config: {}", layout.config.display()),
        Err(e) => {
            eprintln!("cannot write demo: {e}");
            std::process::exit(1);
        }
    }
}
