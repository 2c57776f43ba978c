/*
 * Copyright 2026 The fluidrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLUIDRX_FLUIDRX_HPP_
#define FLUIDRX_FLUIDRX_HPP_

// Everything except the HTTP service, which pulls in cpp-httplib.
#include "fluidrx/bundle.hpp"
#include "fluidrx/classifier.hpp"
#include "fluidrx/dataset.hpp"
#include "fluidrx/error.hpp"
#include "fluidrx/experiment.hpp"
#include "fluidrx/featsel.hpp"
#include "fluidrx/format.hpp"
#include "fluidrx/ife.hpp"
#include "fluidrx/network.hpp"
#include "fluidrx/optimizer.hpp"
#include "fluidrx/projection.hpp"
#include "fluidrx/rng.hpp"
#include "fluidrx/synthetic.hpp"

#endif  // FLUIDRX_FLUIDRX_HPP_
