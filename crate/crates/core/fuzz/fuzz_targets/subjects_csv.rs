#![no_main]

//! Arbitrary bytes as a subject CSV. Anything accepted must survive a
//! write/read round trip unchanged.

use calibsurv::io::{read_subjects_csv, write_subjects_csv, ColumnRoles};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let roles = ColumnRoles::standard(&["z1".into()], &["q1".into()], 3);
    for terminal in [true, false] {
        let Ok(ds) = read_subjects_csv(data, &roles, terminal) else {
            continue;
        };
        for s in ds.subjects() {
            let iv = s.interval();
            assert!(iv.left < iv.right);
            let h = s.history_at(s.obs_time);
            assert!(h.w_bar <= s.obs_time || !terminal);
        }
        let mut buf = Vec::new();
        let written = write_subjects_csv(&ds, &mut buf).expect("in-memory write");
        let back = read_subjects_csv(buf.as_slice(), &written, terminal).expect("round trip");
        assert_eq!(back.subjects(), ds.subjects());
    }
});
