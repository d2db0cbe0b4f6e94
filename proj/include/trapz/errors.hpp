/*
 * Copyright (c) 2026, the trapzbench authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace trapz {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Matrix is not invertible (|det| below threshold).
class SingularMatrixError : public Error {
  public:
    using Error::Error;
};

/// Point maps to (or from) the line at infinity: perspective denominator ~ 0.
class HorizonError : public Error {
  public:
    using Error::Error;
};

/// Quad is degenerate: collinear points, zero area, or zero-length edge.
class DegenerateQuadError : public Error {
  public:
    using Error::Error;
};

/// Requested output canvas exceeds the configured maximum side.
class CanvasLimitError : public Error {
  public:
    using Error::Error;
};

/// Image file cannot be read or written.
class ImageIoError : public Error {
  public:
    using Error::Error;
};

/// Image file uses a bit depth or layout outside the 8-bit RGB contract.
class UnsupportedImageError : public ImageIoError {
  public:
    using ImageIoError::ImageIoError;
};

/// Ground-truth file is malformed; message carries file/field context.
class TruthParseError : public Error {
  public:
    using Error::Error;
};

/// Model output is syntactically unrecoverable.
class ModelOutputError : public Error {
  public:
    using Error::Error;
};

/// Replay-mode extractor found no cached response for a request.
class CacheMissError : public Error {
  public:
    using Error::Error;
};

/// Remote request failed after retries.
class TransportError : public Error {
  public:
    using Error::Error;
};

/// Invalid run configuration (bad paths, unknown modes, missing credentials).
class ConfigError : public Error {
  public:
    using Error::Error;
};

}  // namespace trapz
