# Copyright 2026 The qbit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from ._core import (
    ConfigError,
    CorruptionError,
    DatasetError,
    FormatError,
    Model,
    NumericFailure,
    QbitError,
    QuantizedTensor,
    binarize,
    binarize_channels,
    init_model,
    parse_schedule,
    quantize_activations,
    quantize_unit,
    quantize_weights,
    round_half_away,
    size_report,
    unpack,
)

__all__ = [
    "ConfigError",
    "CorruptionError",
    "DatasetError",
    "FormatError",
    "Model",
    "NumericFailure",
    "QbitError",
    "QuantizedTensor",
    "binarize",
    "binarize_channels",
    "init_model",
    "parse_schedule",
    "quantize_activations",
    "quantize_unit",
    "quantize_weights",
    "round_half_away",
    "size_report",
    "unpack",
]
