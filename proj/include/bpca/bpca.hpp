// Copyright 2026 The bpca Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BPCA_BPCA_HPP_
#define BPCA_BPCA_HPP_

#include "bpca/common.hpp"
#include "bpca/evalkit.hpp"
#include "bpca/fit.hpp"
#include "bpca/gqr.hpp"
#include "bpca/io.hpp"
#include "bpca/link.hpp"
#include "bpca/metric.hpp"

#endif  // BPCA_BPCA_HPP_
