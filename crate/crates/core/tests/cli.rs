use std::path::Path;
use std::process::{Command, Output};

fn relaudit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaudit"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn step_by_step_matches_run_and_report_rerenders() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--languages", "es,it", "--seed", "11"];
    for step in ["generate", "translate", "evaluate", "analyze"] {
        let o = relaudit(&[&[step, "--out", "steps"], &common[..]].concat(), tmp.path());
        assert_eq!(o.status.code(), Some(0), "{step}: {}", stderr(&o));
    }
    let o = relaudit(&[&["run", "--out", "whole"], &common[..]].concat(), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("McNemar"));

    for name in ["summary.txt", "mcnemar.csv", "regression.txt", "accuracy_model.csv", "fig_model.svg"] {
        let a = std::fs::read(tmp.path().join("steps/analysis").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("whole/analysis").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    let summary = tmp.path().join("whole/analysis/summary.txt");
    let before = std::fs::read_to_string(&summary).unwrap();
    std::fs::remove_file(&summary).unwrap();
    std::fs::remove_file(tmp.path().join("whole/analysis/fig_gender.svg")).unwrap();
    let o = relaudit(&["report", "--out", "whole"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&summary).unwrap(), before);
    assert_eq!(stdout(&o), before);
    assert!(tmp.path().join("whole/analysis/fig_gender.svg").is_file());
}

#[test]
fn explain_lists_the_rows_behind_a_stratum() {
    let tmp = tempfile::tempdir().unwrap();
    let o = relaudit(&["run", "--out", "o", "--languages", "es", "--backends", "amazon"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = relaudit(
        &[
            "analyze",
            "--out",
            "o",
            "--languages",
            "es",
            "--backends",
            "amazon",
            "--explain",
            "occupation=judge,relationship=same_gender",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("es-judge-")).collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.split('\t').count() == 7));
    assert!(text.lines().last().unwrap().starts_with("# 30 outcomes"));
}

#[test]
fn missing_inputs_and_bad_configs_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = relaudit(&["analyze", "--out", "empty"], tmp.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("relaudit generate"), "{}", stderr(&o));

    let o = relaudit(&["generate", "--out", "empty", "--languages", "es"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let o = relaudit(&["analyze", "--out", "empty", "--languages", "es"], tmp.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("outcomes.csv"), "{}", stderr(&o));

    std::fs::write(tmp.path().join("bad.toml"), "languages = [\"de\"]\n").unwrap();
    let o = relaudit(&["generate", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    std::fs::write(
        tmp.path().join("http.toml"),
        "languages = [\"es\"]\n[backends.nokey]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:9/\"\nresponse_path = \"t\"\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_relaudit"))
        .args(["run", "--config", "http.toml"])
        .current_dir(tmp.path())
        .env_remove("RELAUDIT_NOKEY_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("RELAUDIT_NOKEY_KEY"), "{}", stderr(&o));
}

#[test]
fn regression_from_external_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("backend_id,language,occupation_id,subject_gender,target_family,correct\n");
    let occupations = ["lawyer", "nurse", "judge", "farmer", "secretary", "dentist"];
    let mut i = 0u32;
    for backend in ["amazon", "google", "microsoft"] {
        for lang in ["fr", "it", "es"] {
            for occ in occupations {
                for gender in ["F", "M"] {
                    for family in ["fiance", "boygirlfriend", "husbandwife"] {
                        i = i.wrapping_mul(1103515245).wrapping_add(12345);
                        let correct = (i >> 16) % 3 != 0;
                        csv.push_str(&format!("{backend},{lang},{occ},{gender},{family},{}\n", correct as u8));
                    }
                }
            }
        }
    }
    std::fs::write(tmp.path().join("external.csv"), csv).unwrap();
    let o = relaudit(&["analyze", "--out", "o", "--regression-input", "external.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("d.f.=10, N=324"), "{text}");
    assert!(tmp.path().join("o/analysis/regression.csv").is_file());
}

#[test]
fn example_config_runs() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let cfg = relaudit::clireport::RunConfig::load(&example).unwrap();
    assert_eq!(cfg.backend_ids(), vec!["amazon", "google", "microsoft"]);
    assert_eq!(cfg.backends[0].config.flip.len(), 2);
    let tmp = tempfile::tempdir().unwrap();
    let o = relaudit(
        &["run", "--config", example.to_str().unwrap(), "--languages", "it", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
