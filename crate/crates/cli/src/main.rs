// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(itp_cli::run_cli(std::env::args_os()));
}
