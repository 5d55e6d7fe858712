use std::fs;
use std::path::PathBuf;

use homodefect::grid::{load_field, save_field, Bc, Grid, GridField, FIELD_MAGIC};

fn corpus(target: &str) -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut v: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|d| d.unwrap().path())
        .collect();
    v.sort();
    v
}

#[test]
fn save_load_roundtrip_is_bitwise() {
    let g = Grid::new(vec![7, 5], vec![-1.0, 0.25], vec![0.3, 0.125], Bc::Dirichlet).unwrap();
    let f = GridField::from_fn(&g, |x| (x[0] * 3.1).sin() * x[1] + 1e-300);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.hdf1");
    save_field(&f, &path).unwrap();
    let back = load_field(&path).unwrap();
    assert_eq!(back, f);
    assert_eq!(fs::read(&path).unwrap(), f.to_bytes());
    assert_eq!(&fs::read(&path).unwrap()[..8], FIELD_MAGIC);
}

#[test]
fn corrupted_files_are_format_errors() {
    let g = Grid::periodic_cell(1, 8).unwrap();
    let bytes = GridField::from_fn(&g, |x| x[0]).to_bytes();
    for cut in [0, 7, 11, 20, bytes.len() - 1] {
        let err = GridField::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(err.is_config_error(), "cut {cut}: {err}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(GridField::from_bytes(&bad).is_err());
    let mut huge = bytes.clone();
    huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(GridField::from_bytes(&huge).is_err());
    let mut nan = bytes;
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(GridField::from_bytes(&nan).is_err());
}

#[test]
fn fuzz_seeds_decode_as_labelled() {
    let seeds = corpus("field_from_bytes");
    assert!(!seeds.is_empty());
    for p in seeds {
        let bytes = fs::read(&p).unwrap();
        let decoded = GridField::from_bytes(&bytes);
        let expect_ok = !p.file_name().unwrap().to_string_lossy().contains("truncated");
        assert_eq!(decoded.is_ok(), expect_ok, "{}", p.display());
        if let Ok(f) = decoded {
            assert_eq!(f.to_bytes(), bytes);
        }
    }
}

#[test]
fn config_seeds_parse() {
    use homodefect::coefficients::CoefficientSpec;
    use homodefect::commands::{CorrectorConfig, PotentialConfig, SolveConfig, TensorConfig};
    use homodefect::study::StudyConfig;
    for p in corpus("coefficient_config") {
        let spec = CoefficientSpec::from_json_str(&fs::read_to_string(&p).unwrap()).unwrap();
        spec.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for p in corpus("study_config") {
        let cfg = StudyConfig::from_json_str(&fs::read_to_string(&p).unwrap()).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for p in corpus("command_configs") {
        let bytes = fs::read(&p).unwrap();
        let text = std::str::from_utf8(&bytes[1..]).unwrap();
        let ok = match bytes[0] % 4 {
            0 => CorrectorConfig::from_json_str(text).is_ok(),
            1 => TensorConfig::from_json_str(text).is_ok(),
            2 => PotentialConfig::from_json_str(text).is_ok(),
            _ => SolveConfig::from_json_str(text).is_ok(),
        };
        assert!(ok, "{}", p.display());
    }
}
