//! Writes a synthetic UCI-HAR tree: `synthetic_tree <dir> [n_train] [n_test] [seed]`.

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let Some(dir) = args.get(1) else {
        eprintln!("usage: synthetic_tree <dir> [n_train] [n_test] [seed]");
        std::process::exit(1);
    };
    let num = |i: usize, d: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (n_train, n_test, seed) = (num(2, 600) as usize, num(3, 240) as usize, num(4, 0));
    if let Err(e) = hiwave::data::write_synthetic_tree(std::path::Path::new(dir), n_train, n_test, seed) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
