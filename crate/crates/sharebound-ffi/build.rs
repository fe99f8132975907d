fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("SHAREBOUND_H".to_string()),
        cpp_compat: true,
        documentation: true,
        header: Some("/* C interface of the sharebound library. */".to_string()),
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/sharebound.h"));
        }
        Err(e) => {
            // A stale committed header beats a broken build.
            println!("cargo:warning=skipping header regeneration: {e}");
        }
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
