use std::path::Path;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/circuit_augmentor.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let h = header();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for f in exports {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
}

#[test]
fn header_is_plain_c() {
    let h = header();
    assert!(h.contains("#define CA_POINT_LEN 15"));
    assert!(h.contains("CA_STATUS_OK = 0"));
    assert!(h.contains("typedef struct CaDataset CaDataset;"));
    assert!(!h.contains("namespace") && !h.contains("template"));
}
