#pragma once

#include <stdexcept>
#include <string>

namespace ksp {

// Shape/precondition violations on numeric operations.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Mask policy precondition failed; message names the violated inequality.
struct policy_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad metric/detector parameters (window too large, threshold out of range, ...).
struct parameter_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Metric has no defined value for the given inputs (e.g. zero reference).
struct undefined_metric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Coil-sensitivity estimation cannot proceed (too few ACS lines).
struct estimation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered during an iterative solve.
struct divergence_error : std::runtime_error {
  int iteration;
  divergence_error(const std::string& what, int iter)
      : std::runtime_error(what), iteration(iter) {}
};

// Wire protocol: unknown message id.
struct protocol_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wire protocol: stream ended inside a message.
struct incomplete_message_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wire protocol: header/payload inconsistency.
struct malformed_message_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Chain configuration violates a structural rule.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Acquisition-to-slice assembly failed (duplicate line, inconsistent dims, ...).
struct assembly_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Document could not be parsed; line is 1-based, 0 if unknown.
struct parse_error : std::runtime_error {
  int line;
  parse_error(const std::string& what, int line_no = 0)
      : std::runtime_error(what), line(line_no) {}
};

// Parsed document violates a field invariant.
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct net_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Peer closed the connection before the session finished.
struct premature_close_error : net_error {
  using net_error::net_error;
};

}  // namespace ksp
