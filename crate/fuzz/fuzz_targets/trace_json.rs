#![no_main]
use evqr::IterateTrace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = IterateTrace::from_json(s) {
        let again = IterateTrace::from_json(&trace.to_json().unwrap()).unwrap();
        assert_eq!(again, trace);
    }
});
