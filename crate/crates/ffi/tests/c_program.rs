//! Compiles a small C client against the generated header and the shared
//! library, then runs it on a store written from Rust.

use std::path::PathBuf;
use std::process::Command;

use embrec::pipeline::{ResultsStore, Source, StoreEntry};

const CLIENT: &str = r#"
#include <stdio.h>
#include <string.h>
#include "embrec.h"

int main(int argc, char **argv) {
    EmbrecStore *store = NULL;
    if (embrec_store_open(argv[1], &store) != EMBREC_STATUS_OK) {
        fprintf(stderr, "open: %s\n", embrec_last_error());
        return 10;
    }
    EmbrecList *list = NULL;
    if (embrec_store_lookup(store, "u1", &list) != EMBREC_STATUS_OK) return 11;
    for (size_t i = 0; i < embrec_list_len(list); i++)
        printf("%s %.2f\n", embrec_list_item_id(list, i), embrec_list_score(list, i));
    embrec_list_free(list);
    if (embrec_store_lookup(store, "nobody", &list) != EMBREC_STATUS_NOT_FOUND) return 12;
    embrec_store_free(store);
    if (embrec_store_open("/no/such/file", &store) != EMBREC_STATUS_DATA) return 13;
    if (strlen(embrec_last_error()) == 0) return 14;
    printf("version %s\n", embrec_version());
    return 0;
}
"#;

#[test]
fn c_client_links_and_runs() {
    // `cargo test` only builds the rlib, so build the cdylib in a separate
    // target dir (the outer build dir may still be locked).
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = manifest.join("../../target/c-client");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let lib = Command::new(cargo)
        .args(["build", "--quiet", "-p", "embrec-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .current_dir(&manifest)
        .output()
        .unwrap();
    assert!(lib.status.success(), "{}", String::from_utf8_lossy(&lib.stderr));
    let lib_dir = target.join("debug");
    assert!(lib_dir.join("libembrec_ffi.so").exists());
    let include = manifest.join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, CLIENT).unwrap();
    let bin = dir.path().join("client");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let built = match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg(format!("-I{}", include.display()))
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lembrec_ffi")
        .output()
    {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    };
    assert!(built.status.success(), "{}", String::from_utf8_lossy(&built.stderr));

    let mut store = ResultsStore::default();
    store.entries.insert(
        "u1".into(),
        StoreEntry {
            source: Source::Model,
            items: vec![("i7".into(), 0.5), ("i3".into(), 0.25)],
        },
    );
    let path = dir.path().join("r.erst");
    store.save(&path).unwrap();
    let run = Command::new(&bin).arg(&path).output().unwrap();
    let out = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {out} {}", run.status, String::from_utf8_lossy(&run.stderr));
    assert!(out.starts_with("i7 0.50\ni3 0.25\nversion "), "{out}");
}
