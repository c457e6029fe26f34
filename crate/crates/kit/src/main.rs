// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

fn main() -> ExitCode {
    let code = chernoff_kit::cli::main_with_args(std::env::args_os());
    ExitCode::from(code as u8)
}
