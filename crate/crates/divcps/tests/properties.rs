use divcps::output::csv_bytes;
use divcps::{validate_text, Row};
use proptest::prelude::*;

proptest! {
    #[test]
    fn csv_round_trips_rows(rows in prop::collection::vec(
        (any::<u32>(), -1e6f64..1e6, "[A-Za-z_][A-Za-z0-9_]{0,8}", any::<f64>().prop_filter("finite", |v| v.is_finite())),
        0..20,
    )) {
        let rows: Vec<Row> = rows.into_iter().map(|(k, t, s, v)| Row::new(k as usize, t, s, v)).collect();
        let bytes = csv_bytes(&rows).unwrap();
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let back: Vec<Row> = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                Row {
                    path_id: r[0].parse().unwrap(),
                    t: r[1].parse().unwrap(),
                    series: r[2].to_string(),
                    value: r[3].parse().unwrap(),
                }
            })
            .collect();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn validate_never_panics_on_model_parameters(
        n in 0usize..6,
        delta in -1.0f64..2.0,
        sigma in -1.0f64..1.0,
        horizon in -1.0f64..2.0,
        steps in 0usize..64,
        paths in 0usize..4,
    ) {
        let text = format!(
            "kind = \"simulate\"\n[model]\ntype = \"fernholz\"\nn = {n}\ndelta = {delta:?}\nsigma = {sigma:?}\n\
             [grid]\nhorizon = {horizon:?}\nsteps = {steps}\n[monte_carlo]\npaths = {paths}\nseed = 1\n"
        );
        let v = validate_text(&text);
        let ok = n >= 2 && delta > 0.0 && delta < 1.0 && sigma != 0.0 && horizon > 0.0 && steps > 0 && paths > 0;
        if !ok {
            prop_assert!(!v.is_empty(), "accepted: {text}");
        }
    }
}
