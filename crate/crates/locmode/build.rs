fn main() {
    // Symmetric eigensolves and Cholesky factorizations go through the system
    // LAPACK bundled with OpenBLAS; everything else is pure Rust.
    println!("cargo:rustc-link-search=native=/usr/lib/x86_64-linux-gnu");
    println!("cargo:rustc-link-lib=dylib=openblas");
}
