use std::fs;
use std::path::Path;
use std::process::Command;

fn root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(root().join("include/glasslab.h")).unwrap();
    let src = fs::read_to_string(root().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 10);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for handle in ["GlasslabModel", "GlasslabDisorder", "GlasslabExact", "GlasslabRs"] {
        assert!(header.contains(&format!("typedef struct {handle} {handle};")), "{handle} is not opaque");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("use.c");
    fs::write(
        &main,
        "#include \"glasslab.h\"\nint main(void) { GlasslabModel *m = 0; \
         return glasslab_model_sk(1, 0.5, 0.0, &m) == GLASSLAB_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(root().join("include"))
        .arg(&main)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
