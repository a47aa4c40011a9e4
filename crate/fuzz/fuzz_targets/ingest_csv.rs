#![no_main]
use evqr::io::ingest_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let x = ["x".to_owned()];
    let y = ["y1".to_owned(), "y2".to_owned()];
    if let Ok(ing) = ingest_csv(data, &x, &y) {
        assert_eq!(ing.x.nrows(), ing.y.nrows());
        assert_eq!(ing.b.len(), ing.x.nrows());
        assert!(ing.x.iter().chain(ing.y.iter()).all(|v| v.is_finite()));
    }
});
