use proptest::prelude::*;

use dlangevin::io::{density_from_csv, density_to_csv};
use dlangevin::RunConfig;
use dlangevin_core::{Grid, GridDensity};

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![0.0f64..1e3, (-300i32..300).prop_map(|e| 10f64.powi(e)), Just(f64::MIN_POSITIVE), Just(0.0)]
}

proptest! {
    #[test]
    fn density_csv_is_bit_exact_1d(lo in -10.0f64..0.0, w in 0.1f64..20.0, vals in proptest::collection::vec(value(), 8..40)) {
        let g = Grid::new_1d(lo, lo + w, vals.len()).unwrap();
        let d = GridDensity::from_values(g, vals).unwrap();
        let back = density_from_csv(&density_to_csv(&d)).unwrap();
        prop_assert_eq!(back.grid(), d.grid());
        prop_assert!(back.values().iter().zip(d.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn density_csv_is_bit_exact_2d(nx in 8usize..14, ny in 8usize..14, seed in any::<u64>()) {
        let g = Grid::new_2d([-1.5, -2.0], [1.0, 3.25], [nx, ny]).unwrap();
        let vals: Vec<f64> = (0..nx * ny).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0).collect();
        let d = GridDensity::from_values(g, vals).unwrap();
        let text = density_to_csv(&d);
        prop_assert_eq!(text.lines().count(), nx + 1);
        let back = density_from_csv(&text).unwrap();
        prop_assert_eq!(back.grid(), d.grid());
        prop_assert!(back.values().iter().zip(d.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn density_header_is_checked() {
    let g = Grid::new_1d(0.0, 1.0, 8).unwrap();
    let text = density_to_csv(&GridDensity::uniform(g));
    assert!(text.starts_with("# grid 0.0000000000000000e0 1.0000000000000000e0 8 1\n"));
    assert!(density_from_csv(&text.replacen("# grid", "# grd", 1)).is_err());
    assert!(density_from_csv(&text.replacen(" 8 1", " 9 1", 1)).is_err());
    assert!(density_from_csv(&text.replacen("1.0000000000000000e0\n", "-1.0\n", 1)).is_err());
}

#[test]
fn config_errors_point_at_the_line() {
    let text = "[potential]\nname = \"double_well\"\n[model]\nlambda = 0.5\neta = 0.5\nm = 2.0\nfoo = 1\n[grid]\nlo=[-1.0]\nhi=[1.0]\nn=[8]\n";
    let e = RunConfig::from_toml(text).unwrap_err().to_string();
    assert!(e.contains("foo") && e.contains("line 7"), "{e}");
}

#[test]
fn shipped_configs_parse() {
    for name in ["double_well.toml", "egg_carton.toml"] {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/").to_string() + name;
        let cfg = RunConfig::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
        cfg.grid().unwrap();
        cfg.potential().unwrap();
        cfg.params().unwrap();
    }
}
