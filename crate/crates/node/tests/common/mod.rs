#![allow(dead_code)]

use std::path::Path;

use sugarchain_core::identity::{RegistrationForm, Role};
use sugarchain_node::NodeConfig;

pub fn dev_config(dir: &Path) -> NodeConfig {
    NodeConfig {
        data_dir: dir.to_path_buf(),
        kdf_iterations: 32,
        dev_seed: Some(7),
        ..NodeConfig::default()
    }
}

pub fn form(name: &str, role: Role) -> RegistrationForm {
    RegistrationForm {
        name: format!("{name} Patil"),
        email: format!("{name}@example.invalid"),
        phone: "+91-9000000000".into(),
        password: format!("{name}-password"),
        role,
        recovery: vec![
            ("q1".into(), "a1".into()),
            ("q2".into(), "a2".into()),
            ("q3".into(), "a3".into()),
        ],
    }
}

/// Run the CLI in-process.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["sugarchain"];
    argv.extend_from_slice(args);
    let code = sugarchain_node::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
