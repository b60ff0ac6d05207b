//! Prints the built-in configuration as JSON (the source of
//! `configs/default.json`).

fn main() {
    println!("{}", serde_json::to_string_pretty(&thp_core::Config::default()).expect("serializable"));
}
