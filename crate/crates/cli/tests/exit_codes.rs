use std::fs;

use clap::Parser;
use mozart_cli::{run, Cli, EXIT_INPUT, EXIT_OK};
use proptest::prelude::*;

fn run_args(args: &[&str]) -> u8 {
    match Cli::try_parse_from(std::iter::once("mozart").chain(args.iter().copied())) {
        Ok(cli) => run(cli),
        Err(_) => EXIT_INPUT,
    }
}

fn registry_line() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z0-9]{1,6},[01]",
        "[a-z0-9]{0,6},[0-9]{0,2}",
        "[ -~]{0,12}",
        Just(String::new()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn malformed_registries_exit_0_or_2(
        header in prop_oneof![Just("id,label".to_string()), "[ -~]{0,12}"],
        lines in prop::collection::vec(registry_line(), 0..20),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let reg = dir.path().join("reg.csv");
        fs::write(&reg, format!("{header}\n{}", lines.join("\n"))).unwrap();
        let out = dir.path().join("out");
        let code = run_args(&["split", "--registry", reg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        prop_assert!(code == EXIT_OK || code == EXIT_INPUT, "exit {code}");
        prop_assert_eq!(code == EXIT_OK, out.join("split.json").is_file());
    }

    #[test]
    fn malformed_configs_exit_2(body in "[ -~\n]{0,80}") {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, &body).unwrap();
        let out = dir.path().join("out");
        // no random document can name an existing prediction table in this directory
        let code = run_args(&["--config", cfg.to_str().unwrap(), "train", "--out", out.to_str().unwrap()]);
        prop_assert_eq!(code, EXIT_INPUT);
    }
}
