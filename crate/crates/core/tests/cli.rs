use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use censored_outliers::report::AnalysisArtifact;
use censored_outliers::sim::{cohort_csv, synthetic_cohort, COHORT_SEED};

fn cohort() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cohort.csv")
}

fn censout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_censout"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn detect(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "detect",
        "--data",
        data.to_str().unwrap(),
        "--time-col",
        "time",
        "--status-col",
        "status",
        "--covariates",
        "meta",
        "--log-time",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    censout(&args)
}

fn starred_rows(report: &str) -> Vec<usize> {
    report
        .lines()
        .filter(|l| l.trim_end().ends_with('*'))
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect()
}

fn outliers_detected(report: &str) -> usize {
    let line = report
        .lines()
        .find(|l| l.contains("# of outliers detected:"))
        .unwrap();
    line.rsplit(' ').next().unwrap().parse().unwrap()
}

#[test]
fn bundled_cohort_is_reproducible() {
    let text = std::fs::read_to_string(cohort()).unwrap();
    assert_eq!(text, cohort_csv(&synthetic_cohort(COHORT_SEED)));
    assert_eq!(text.lines().count(), 403);
    assert_eq!(text.lines().next().unwrap(), "id,meta,exam,status,time,ratio");
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let o = censout(&["detect", "--data", "x.csv", "--status-col", "s", "--covariates", "a"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--time-col"));

    let o = censout(&[
        "detect", "--data", "/nonexistent/x.csv", "--time-col", "t", "--status-col", "s", "--covariates", "a",
    ]);
    assert_eq!(o.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,status,x\n1,1,0\n0,1,1\n2,0,2\n").unwrap();
    let o = censout(&[
        "detect", "--data", bad.to_str().unwrap(), "--time-col", "time", "--status-col", "status",
        "--covariates", "x",
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = censout(&[
        "detect", "--data", bad.to_str().unwrap(), "--time-col", "time", "--status-col", "status",
        "--covariates", "x", "--h", "-1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn score_workflow_on_bundled_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let o = detect(&cohort(), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout(&o);
    assert!(report.contains("Algorithm: Scoring algorithm (score)"));
    assert!(report.contains("Model: Locally weighted censored quantile regression"));
    assert!(report.contains("Value for cut-off k_s: undecided"));
    assert_eq!(outliers_detected(&report), 0);
    assert!(report.contains("Top 6 outlying scores:"));
    assert!(starred_rows(&report).is_empty());
    for f in ["artifact.json", "report.txt", "qq.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), report);

    let artifact = dir.path().join("artifact.json");
    let art = artifact.to_str().unwrap();

    let o = censout(&["update", "--artifact", art, "--k-s", "4"]);
    assert!(o.status.success());
    let report = stdout(&o);
    assert_eq!(outliers_detected(&report), 2);
    let mut rows = starred_rows(&report);
    rows.sort_unstable();
    assert_eq!(rows, vec![327, 346]);

    let o = censout(&["update", "--artifact", art, "--k-s", "100"]);
    assert_eq!(outliers_detected(&stdout(&o)), 0);

    // decreasing thresholds give nested supersets; the full listing stars
    // exactly the counted outliers
    let mut previous: Vec<usize> = Vec::new();
    for k in ["6", "4", "3", "2.5", "2"] {
        let o = censout(&["update", "--artifact", art, "--k-s", k, "--all"]);
        let report = stdout(&o);
        let rows = starred_rows(&report);
        assert_eq!(rows.len(), outliers_detected(&report));
        assert!(previous.iter().all(|r| rows.contains(r)), "k_s = {k}");
        previous = rows;
    }
    assert!(previous.len() >= 4);

    let o = censout(&["coef", "--artifact", art]);
    assert!(o.status.success());
    let table = stdout(&o);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0].split_whitespace().count(), 5);
    assert!(lines[1].starts_with("(Intercept)"));
    assert!(lines[2].starts_with("meta"));
    assert!(lines[2].split_whitespace().skip(1).all(|v| v.starts_with('-')));
}

#[test]
fn artifact_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    assert!(detect(&cohort(), dir.path(), &["--k-s", "3"]).status.success());
    let path = dir.path().join("artifact.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let a = AnalysisArtifact::load(&path).unwrap();
    assert_eq!(a.to_json().unwrap(), text);
    assert_eq!(a.fits.len(), 5);
    assert!(text.contains("\"beta\": [\n"));
    // every stored real is a 17-significant-digit string
    let fit = &a.fits["0.50"];
    let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
    let beta0 = raw["fits"]["0.50"]["beta"][0].as_str().unwrap();
    assert_eq!(beta0.split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
    assert_eq!(beta0.parse::<f64>().unwrap().to_bits(), fit.beta[0].0.to_bits());
    assert_eq!(a.detection.n_outliers, a.detection.flags.iter().filter(|&&f| f).count());
}

#[test]
fn plot_geometry() {
    let dir = tempfile::tempdir().unwrap();
    assert!(detect(&cohort(), dir.path(), &[]).status.success());
    let svg_path = dir.path().join("p.svg");
    let o = censout(&[
        "plot",
        "--artifact",
        dir.path().join("artifact.json").to_str().unwrap(),
        "--k-s",
        "4",
        "--out",
        svg_path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let svg = std::fs::read_to_string(&svg_path).unwrap();

    let text = std::fs::read_to_string(cohort()).unwrap();
    let statuses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    let events = statuses.iter().filter(|s| **s == "1").count();
    assert_eq!(svg.matches("class=\"event\"").count(), events);
    assert_eq!(svg.matches("class=\"censored\"").count(), statuses.len() - events);

    let threshold_y: f64 = {
        let line = svg.lines().find(|l| l.contains("class=\"threshold\"")).unwrap();
        let s = line.find("y1=\"").unwrap() + 4;
        line[s..s + line[s..].find('"').unwrap()].parse().unwrap()
    };
    let above = svg
        .lines()
        .filter(|l| l.contains("transform=\"translate("))
        .filter(|l| {
            let s = l.find("translate(").unwrap() + 10;
            let inner = &l[s..s + l[s..].find(')').unwrap()];
            let y: f64 = inner.split(',').nth(1).unwrap().parse().unwrap();
            y < threshold_y
        })
        .count();
    assert_eq!(above, 2);
    assert!(svg.contains("class=\"reference\""));
}

#[test]
fn update_guards() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cohort.csv");
    std::fs::copy(cohort(), &data).unwrap();

    let box_dir = dir.path().join("box");
    assert!(detect(&data, &box_dir, &["--method", "boxplot", "--k-b", "1.0"]).status.success());
    let o = censout(&["update", "--artifact", box_dir.join("artifact.json").to_str().unwrap(), "--k-s", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!box_dir.join("qq.svg").exists());

    let fast_dir = dir.path().join("fast");
    assert!(detect(&data, &fast_dir, &["--fast"]).status.success());
    let fast = fast_dir.join("artifact.json");
    let o = censout(&["coef", "--artifact", fast.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str("99999999,0,5,1,12,0.0000000\n");
    std::fs::write(&data, text).unwrap();
    let o = censout(&["update", "--artifact", fast.to_str().unwrap(), "--k-s", "4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("changed"));
}

#[test]
fn boxplot_and_residual_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = detect(&cohort(), dir.path(), &["--method", "boxplot", "--k-b", "1.0", "--fast"]);
    let report = stdout(&o);
    assert!(report.contains("Value for cut-off k_b: 1"));
    let mut rows = starred_rows(&report);
    rows.sort_unstable();
    assert_eq!(rows, vec![327, 346]);
    assert!(report.contains(" 2 of all 2 outliers were displayed."));

    let o = detect(&cohort(), dir.path(), &["--method", "residual", "--fast"]);
    let report = stdout(&o);
    let n = outliers_detected(&report);
    assert!(n > 6);
    assert!(report.contains(&format!(" 6 of all {n} outliers were displayed.")));
    let o = detect(&cohort(), dir.path(), &["--method", "residual", "--fast", "--all"]);
    assert_eq!(starred_rows(&stdout(&o)).len(), n);
}

#[test]
fn simulate_is_deterministic() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let o = censout(&[
            "simulate",
            "--replicates",
            "1",
            "--seed",
            "7",
            "--c",
            "3,5",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((
            std::fs::read(dir.path().join("study.csv")).unwrap(),
            std::fs::read(dir.path().join("study.txt")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    // 2 scenarios x 11 cutoffs + header
    assert_eq!(csv.lines().count(), 23);

    let o = censout(&["simulate", "--replicates", "2", "--method", "boxplot", "--k-b", "2.0"]);
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("boxplot")).count(), 1);
    assert!(!text.contains("residual "));

    let o = censout(&["simulate", "--replicates", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
