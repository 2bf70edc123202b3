//! Print the 36-element feature vector of each image given on the
//! command line, one CSV row per image: `path,f0,...,f35`.

use brisque::{extract_features, GrayImage};

fn main() {
    let mut failed = false;
    for path in std::env::args().skip(1) {
        match GrayImage::open(&path).and_then(|img| extract_features(&img)) {
            Ok(features) => {
                let row: Vec<String> =
                    features.values().iter().map(|v| format!("{v:.17e}")).collect();
                println!("{path},{}", row.join(","));
            }
            Err(err) => {
                eprintln!("{path}: {err}");
                failed = true;
            }
        }
    }
    if failed {
        std::process::exit(1);
    }
}
