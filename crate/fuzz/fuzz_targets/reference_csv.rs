#![no_main]
use evqr::io::read_reference_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&first, rest)) = data.split_first() else {
        return;
    };
    let d_y = 1 + (first % 3) as usize;
    if let Ok(u) = read_reference_csv(rest, d_y) {
        assert_eq!(u.ncols(), d_y);
        assert!(u.nrows() > 0);
    }
});
