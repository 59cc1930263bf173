//! Bundled benchmark programs and their host-side reference results.

use super::asm::Asm;
use super::machine::DETECT_PORT;
use super::{ToyError, ToyProgram};

pub const MATMUL: &str = "matmul";
pub const MATMUL_ABFT: &str = "matmul_abft";
pub const DOT_PRODUCT: &str = "dot_product";
pub const CHECKSUM_SORT: &str = "checksum_sort";
pub const STRING_SEARCH: &str = "string_search";

pub const ALL: [&str; 5] = [MATMUL, MATMUL_ABFT, DOT_PRODUCT, CHECKSUM_SORT, STRING_SEARCH];

/// Benchmarks used for the bundled vulnerability profile.
pub const PROFILE_SET: [&str; 4] = [MATMUL, DOT_PRODUCT, CHECKSUM_SORT, STRING_SEARCH];

const N: usize = 8;

pub fn by_name(name: &str) -> Result<ToyProgram, ToyError> {
    match name {
        MATMUL => matmul(),
        MATMUL_ABFT => matmul_abft(),
        DOT_PRODUCT => dot_product(),
        CHECKSUM_SORT => checksum_sort(),
        STRING_SEARCH => string_search(),
        _ => Err(ToyError::UnknownBenchmark(name.to_string())),
    }
}

pub fn matrix_a() -> Vec<u32> {
    (0..N * N).map(|k| ((3 * (k / N) + 5 * (k % N) + 1) % 10) as u32).collect()
}

pub fn matrix_b() -> Vec<u32> {
    (0..N * N).map(|k| ((7 * (k / N) + 2 * (k % N) + 3) % 9) as u32).collect()
}

/// Host reference product of the bundled 8x8 inputs, row-major.
pub fn matmul_reference() -> Vec<u32> {
    let (a, b) = (matrix_a(), matrix_b());
    let mut c = vec![0u32; N * N];
    for i in 0..N {
        for j in 0..N {
            c[i * N + j] = (0..N).map(|k| a[i * N + k] * b[k * N + j]).sum();
        }
    }
    c
}

/// `C[rows x cols] = A[rows x inner] * B[inner x cols]`, all row-major.
/// Uses r1-r13.
fn emit_matmul(
    asm: &mut Asm,
    tag: &str,
    (rows, inner, cols): (i16, i16, i16),
    (a_base, b_base, c_base): (i16, i16, i16),
) {
    let lab = |s: &str| format!("{tag}_{s}");
    asm.li(11, inner).li(12, cols).li(13, rows).li(1, 0);
    asm.label(&lab("i")).li(2, 0);
    asm.label(&lab("j")).li(3, 0).li(4, 0);
    asm.label(&lab("k"))
        .mul(5, 1, 11)
        .add(5, 5, 3)
        .load(6, 5, a_base)
        .mul(7, 3, 12)
        .add(7, 7, 2)
        .load(8, 7, b_base)
        .mul(9, 6, 8)
        .add(4, 4, 9)
        .addi(3, 3, 1)
        .sub(10, 3, 11)
        .bz(10, &lab("kd"))
        .jump(&lab("k"));
    asm.label(&lab("kd"))
        .mul(5, 1, 12)
        .add(5, 5, 2)
        .store(4, 5, c_base)
        .addi(2, 2, 1)
        .sub(10, 2, 12)
        .bz(10, &lab("jd"))
        .jump(&lab("j"));
    asm.label(&lab("jd"))
        .addi(1, 1, 1)
        .sub(10, 1, 13)
        .bz(10, &lab("id"))
        .jump(&lab("i"));
    asm.label(&lab("id"));
}

/// Output a `rows x cols` block of a row-major matrix with the given stride.
fn emit_output_block(asm: &mut Asm, tag: &str, base: i16, stride: i16, rows: i16, cols: i16) {
    let lab = |s: &str| format!("{tag}_{s}");
    asm.li(11, stride).li(12, cols).li(13, rows).li(1, 0);
    asm.label(&lab("r")).li(2, 0);
    asm.label(&lab("c"))
        .mul(5, 1, 11)
        .add(5, 5, 2)
        .load(4, 5, base)
        .out(4)
        .addi(2, 2, 1)
        .sub(10, 2, 12)
        .bz(10, &lab("cd"))
        .jump(&lab("c"));
    asm.label(&lab("cd"))
        .addi(1, 1, 1)
        .sub(10, 1, 13)
        .bz(10, &lab("rd"))
        .jump(&lab("r"));
    asm.label(&lab("rd"));
}

/// 8x8 integer matrix product; A at 0, B at 64, C at 128; outputs C.
pub fn matmul() -> Result<ToyProgram, ToyError> {
    let mut data = matrix_a();
    data.extend(matrix_b());
    let mut asm = Asm::new();
    emit_matmul(&mut asm, "mm", (8, 8, 8), (0, 64, 128));
    emit_output_block(&mut asm, "out", 128, 8, 8, 8);
    asm.halt();
    asm.assemble(MATMUL, data)
}

/// Matrix product protected by row/column checksums.
///
/// A is extended with a column-checksum row (9x8 at 0), B with a row-checksum
/// column (8x9 at 72); the 9x9 product at 144 then carries both checksums.
/// After the product every data row and column is re-summed. A single
/// mismatching row and column locate one corrupted element, which is corrected
/// in place; a lone mismatch in a checksum row or column is ignored; anything
/// else is reported by a store to the detect port.
pub fn matmul_abft() -> Result<ToyProgram, ToyError> {
    const A: i16 = 0;
    const B: i16 = 72;
    const C: i16 = 144;
    const ROWDIFF: i16 = 225;
    const COLDIFF: i16 = 233;
    let mut data = vec![0u32; 144];
    let (a, b) = (matrix_a(), matrix_b());
    for i in 0..N {
        for j in 0..N {
            data[i * 8 + j] = a[i * N + j];
            data[B as usize + i * 9 + j] = b[i * N + j];
        }
    }
    let mut asm = Asm::new();
    asm.li(11, 8).li(12, 9);

    // column checksums of A into row 8
    asm.li(2, 0);
    asm.label("ecj").li(1, 0).li(4, 0);
    asm.label("eci")
        .mul(5, 1, 11)
        .add(5, 5, 2)
        .load(6, 5, A)
        .add(4, 4, 6)
        .addi(1, 1, 1)
        .sub(10, 1, 11)
        .bz(10, "ecd")
        .jump("eci");
    asm.label("ecd")
        .store(4, 2, A + 64)
        .addi(2, 2, 1)
        .sub(10, 2, 11)
        .bz(10, "ecx")
        .jump("ecj");
    asm.label("ecx");

    // row checksums of B into column 8
    asm.li(1, 0);
    asm.label("eri").li(2, 0).li(4, 0);
    asm.label("erj")
        .mul(5, 1, 12)
        .add(5, 5, 2)
        .load(6, 5, B)
        .add(4, 4, 6)
        .addi(2, 2, 1)
        .sub(10, 2, 11)
        .bz(10, "erd")
        .jump("erj");
    asm.label("erd")
        .mul(5, 1, 12)
        .store(4, 5, B + 8)
        .addi(1, 1, 1)
        .sub(10, 1, 11)
        .bz(10, "erx")
        .jump("eri");
    asm.label("erx");

    emit_matmul(&mut asm, "mm", (9, 8, 9), (A, B, C));
    asm.li(11, 8).li(12, 9);

    // row residues: C[i][8] - sum_j C[i][j]
    asm.li(1, 0);
    asm.label("vri").li(2, 0).li(4, 0);
    asm.label("vrj")
        .mul(5, 1, 12)
        .add(5, 5, 2)
        .load(6, 5, C)
        .add(4, 4, 6)
        .addi(2, 2, 1)
        .sub(10, 2, 11)
        .bz(10, "vrd")
        .jump("vrj");
    asm.label("vrd")
        .mul(5, 1, 12)
        .load(6, 5, C + 8)
        .sub(6, 6, 4)
        .store(6, 1, ROWDIFF)
        .addi(1, 1, 1)
        .sub(10, 1, 11)
        .bz(10, "vrx")
        .jump("vri");
    asm.label("vrx");

    // column residues: C[8][j] - sum_i C[i][j]
    asm.li(2, 0);
    asm.label("vcj").li(1, 0).li(4, 0);
    asm.label("vci")
        .mul(5, 1, 12)
        .add(5, 5, 2)
        .load(6, 5, C)
        .add(4, 4, 6)
        .addi(1, 1, 1)
        .sub(10, 1, 11)
        .bz(10, "vcd")
        .jump("vci");
    asm.label("vcd")
        .load(6, 2, C + 72)
        .sub(6, 6, 4)
        .store(6, 2, COLDIFF)
        .addi(2, 2, 1)
        .sub(10, 2, 11)
        .bz(10, "vcx")
        .jump("vcj");
    asm.label("vcx");

    // r7 = mismatching rows, r8 = last such row
    asm.li(1, 0).li(7, 0).li(8, 0);
    asm.label("cr").load(6, 1, ROWDIFF).bz(6, "crs").addi(7, 7, 1).mov(8, 1);
    asm.label("crs").addi(1, 1, 1).sub(10, 1, 11).bz(10, "crx").jump("cr");
    asm.label("crx");
    // r9 = mismatching columns, r3 = last such column
    asm.li(2, 0).li(9, 0).li(3, 0);
    asm.label("cc").load(6, 2, COLDIFF).bz(6, "ccs").addi(9, 9, 1).mov(3, 2);
    asm.label("ccs").addi(2, 2, 1).sub(10, 2, 11).bz(10, "ccx").jump("cc");
    asm.label("ccx");

    asm.add(10, 7, 9).bz(10, "ok");
    asm.addi(10, 7, -1).bz(10, "row1");
    asm.bz(7, "row0").jump("detect");
    asm.label("row0").addi(10, 9, -1).bz(10, "ok").jump("detect");
    asm.label("row1").bz(9, "ok").addi(10, 9, -1).bz(10, "fix").jump("detect");
    asm.label("fix")
        .load(6, 8, ROWDIFF)
        .load(5, 3, COLDIFF)
        .sub(10, 6, 5)
        .bz(10, "fix2")
        .jump("detect");
    asm.label("fix2")
        .mul(5, 8, 12)
        .add(5, 5, 3)
        .load(4, 5, C)
        .add(4, 4, 6)
        .store(4, 5, C)
        .jump("ok");
    asm.label("detect").store(0, 0, DETECT_PORT as i16);
    asm.label("ok");

    emit_output_block(&mut asm, "out", C, 9, 8, 8);
    asm.halt();
    asm.assemble(MATMUL_ABFT, data)
}

const DOT_LEN: usize = 32;

pub fn dot_inputs() -> (Vec<u32>, Vec<u32>) {
    let x = (0..DOT_LEN).map(|i| ((i * 13 + 7) % 17) as u32).collect();
    let y = (0..DOT_LEN).map(|i| ((i * 5 + 3) % 11) as u32).collect();
    (x, y)
}

/// Running dot product, emitted after every 8 elements.
pub fn dot_reference() -> Vec<u32> {
    let (x, y) = dot_inputs();
    let mut acc = 0;
    let mut out = Vec::new();
    for i in 0..DOT_LEN {
        acc += x[i] * y[i];
        if i % 8 == 7 {
            out.push(acc);
        }
    }
    out
}

pub fn dot_product() -> Result<ToyProgram, ToyError> {
    let (mut data, y) = dot_inputs();
    data.extend(y);
    let mut asm = Asm::new();
    asm.li(1, 0).li(4, 0).li(7, 0).li(11, DOT_LEN as i16).li(12, 8);
    asm.label("loop")
        .load(5, 1, 0)
        .load(6, 1, DOT_LEN as i16)
        .mul(5, 5, 6)
        .add(4, 4, 5)
        .addi(1, 1, 1)
        .addi(7, 7, 1)
        .sub(10, 7, 12)
        .bz(10, "group")
        .jump("loop");
    asm.label("group").out(4).li(7, 0).sub(10, 1, 11).bz(10, "done").jump("loop");
    asm.label("done").halt();
    asm.assemble(DOT_PRODUCT, data)
}

const SORT_LEN: usize = 16;

pub fn sort_input() -> Vec<u32> {
    (0..SORT_LEN).map(|i| ((i * 37 + 11) % 53) as u32).collect()
}

/// Sorted values followed by a rotating checksum over them.
pub fn sort_reference() -> Vec<u32> {
    let mut v = sort_input();
    v.sort_unstable();
    let mut cs: u32 = 0;
    for (i, &x) in v.iter().enumerate() {
        cs = (cs << 1 ^ x).wrapping_add(i as u32);
    }
    v.push(cs);
    v
}

/// Bubble sort of 16 words in place, then output each value and a checksum.
pub fn checksum_sort() -> Result<ToyProgram, ToyError> {
    let mut asm = Asm::new();
    asm.li(11, SORT_LEN as i16).li(13, 31).li(1, SORT_LEN as i16 - 1);
    asm.label("outer").li(2, 0);
    asm.label("inner")
        .load(5, 2, 0)
        .load(6, 2, 1)
        .sub(7, 6, 5)
        .shr(8, 7, 13)
        .bz(8, "noswap")
        .store(6, 2, 0)
        .store(5, 2, 1);
    asm.label("noswap")
        .addi(2, 2, 1)
        .sub(10, 2, 1)
        .bz(10, "pass")
        .jump("inner");
    asm.label("pass").addi(1, 1, -1).bz(1, "sorted").jump("outer");
    asm.label("sorted").li(2, 0).li(4, 0).li(9, 1);
    asm.label("cs")
        .load(5, 2, 0)
        .out(5)
        .shl(4, 4, 9)
        .xor(4, 4, 5)
        .add(4, 4, 2)
        .addi(2, 2, 1)
        .sub(10, 2, 11)
        .bz(10, "csd")
        .jump("cs");
    asm.label("csd").out(4).halt();
    asm.assemble(CHECKSUM_SORT, sort_input())
}

const TEXT: &[u8; 64] = b"abcabcaabdabcadbabcaabcabcdaacabcaabbcabcabcadabcaabcdabcaabcdab";
const PATTERN: &[u8; 4] = b"abca";

/// Positions of every occurrence of the pattern, then the match count.
pub fn search_reference() -> Vec<u32> {
    let mut out: Vec<u32> = (0..=TEXT.len() - PATTERN.len())
        .filter(|&p| &TEXT[p..p + PATTERN.len()] == PATTERN)
        .map(|p| p as u32)
        .collect();
    out.push(out.len() as u32);
    out
}

pub fn string_search() -> Result<ToyProgram, ToyError> {
    let mut data: Vec<u32> = TEXT.iter().map(|&c| c as u32).collect();
    data.extend(PATTERN.iter().map(|&c| c as u32));
    let last = (TEXT.len() - PATTERN.len() + 1) as i16;
    let mut asm = Asm::new();
    asm.li(11, last).li(12, PATTERN.len() as i16).li(1, 0).li(9, 0);
    asm.label("pos").li(2, 0);
    asm.label("chr")
        .add(5, 1, 2)
        .load(6, 5, 0)
        .load(7, 2, TEXT.len() as i16)
        .xor(8, 6, 7)
        .bz(8, "chr_ok")
        .jump("next");
    asm.label("chr_ok")
        .addi(2, 2, 1)
        .sub(10, 2, 12)
        .bz(10, "hit")
        .jump("chr");
    asm.label("hit").out(1).addi(9, 9, 1);
    asm.label("next")
        .addi(1, 1, 1)
        .sub(10, 1, 11)
        .bz(10, "done")
        .jump("pos");
    asm.label("done").out(9).halt();
    asm.assemble(STRING_SEARCH, data)
}

/// Host reference output for a bundled benchmark.
pub fn reference_output(name: &str) -> Result<Vec<u32>, ToyError> {
    match name {
        MATMUL | MATMUL_ABFT => Ok(matmul_reference()),
        DOT_PRODUCT => Ok(dot_reference()),
        CHECKSUM_SORT => Ok(sort_reference()),
        STRING_SEARCH => Ok(search_reference()),
        _ => Err(ToyError::UnknownBenchmark(name.to_string())),
    }
}
