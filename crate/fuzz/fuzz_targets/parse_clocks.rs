//! Clock table: explicit GHz pairs or node inventories.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = resel_core::io::parse_clocks(data);
});
