// Copyright 2026 The fib Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FIB_PLUGIN_H_
#define FIB_PLUGIN_H_

#include <functional>
#include <map>
#include <string>

#include "fib/frame.h"
#include "fib/tensor.h"

namespace fib {

// A kernel receives the decoded RUN request and returns its outputs in the
// order the definition declares them.
using KernelFn = std::function<TensorMap(const RunRequest&)>;
using KernelRegistry = std::map<std::string, KernelFn, std::less<>>;

// Serves frames on stdin/stdout until BYE or EOF. The kernel for a RUN is
// picked by the symbol in the request's entry point, falling back to argv[1].
// Kernel exceptions become ERROR frames; the process stays up.
// `runtime` is reported in the HELLO reply next to the shim's own version.
int plugin_main(int argc, char** argv, const KernelRegistry& kernels,
                const std::map<std::string, std::string>& runtime = {});

}  // namespace fib

#endif  // FIB_PLUGIN_H_
