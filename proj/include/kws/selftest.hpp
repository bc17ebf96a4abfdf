/* Copyright 2026 The PatchKWS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef KWS_SELFTEST_HPP_
#define KWS_SELFTEST_HPP_

namespace kws {

// Runs the invariant suite (identity gates, patch round-trips, statistics
// oracles, SNR exactness, gradient spot checks, front-end properties) and
// prints one line per check. Returns the number of failures.
int run_selftest();

}  // namespace kws

#endif  // KWS_SELFTEST_HPP_
