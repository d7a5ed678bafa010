use lst_demo::{cer_alignment, soft_targets, warmup_schedule};

#[test]
fn soft_targets_are_two_distributions() {
    let v = soft_targets(&[2.0, 0.5, -1.0, 0.0], 1, 0.9, 5.0).unwrap();
    assert_eq!(v.len(), 8);
    let (teacher, target) = v.split_at(4);
    assert!((teacher.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((target.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((target[1] - (0.9 + 0.1 * teacher[1])).abs() < 1e-12);
    assert!((target[0] - 0.1 * teacher[0]).abs() < 1e-12);
}

#[test]
fn high_temperature_flattens_the_teacher() {
    let v = soft_targets(&[5.0, -5.0, 0.0], 0, 0.0, 1e6).unwrap();
    for p in &v[..3] {
        assert!((p - 1.0 / 3.0).abs() < 1e-4);
    }
    assert!(soft_targets(&[1.0, 2.0], 2, 0.5, 1.0).is_err());
    assert!(soft_targets(&[1.0, 2.0], 0, 1.5, 1.0).is_err());
}

#[test]
fn schedule_peaks_at_warmup() {
    let lr = warmup_schedule(1.0, 32, 50, 200).unwrap();
    assert_eq!(lr.len(), 200);
    let peak = lr.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak + 1, 50);
    assert!(warmup_schedule(1.0, 32, 0, 10).is_err());
}

#[test]
fn alignment_lines_and_summary() {
    let out = cer_alignment("abcd", "abxde").unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines, ["=\ta\ta", "=\tb\tb", "S\tc\tx", "=\td\td", "I\t\te", "1 0 1 4 50.00"]);
    assert_eq!(cer_alignment("a b", "").unwrap().lines().last(), Some("0 2 0 2 100.00"));
    assert!(cer_alignment(" ", "a").is_err());
}
