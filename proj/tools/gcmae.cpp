// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#include "gcmae/cli.hpp"

int main(int argc, char** argv) {
  return gcmae::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
