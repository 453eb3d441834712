#pragma once

#include <stdexcept>
#include <string>

namespace xlab {

// Every failure mode in the library maps to one code so tests can assert
// on the exact condition instead of matching message strings.
enum class Errc {
  dimension_mismatch,
  zero_norm_vector,
  empty_input,
  non_finite,
  invalid_spec,
  manifest_mismatch,
  truncated_blob,
  unknown_tensor_name,
  token_out_of_range,
  sequence_too_long,
  index_out_of_range,
  duplicate_patch_site,
  invalid_config,
  subspace_overflow,
  unknown_language,
  invalid_gen_config,
  malformed_line,
  non_parallel,
  duplicate_id,
  unknown_token,
  id_mismatch,
  length_mismatch,
  empty_subset,
  empty_group,
  no_eligible_donor,
  empty_cell,
  cell_mismatch,
  missing_artifact,
  empty_tf_set,
  io_error,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::zero_norm_vector: return "ZeroNormVector";
    case Errc::empty_input: return "EmptyInput";
    case Errc::non_finite: return "NonFinite";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::manifest_mismatch: return "ManifestMismatch";
    case Errc::truncated_blob: return "TruncatedBlob";
    case Errc::unknown_tensor_name: return "UnknownTensorName";
    case Errc::token_out_of_range: return "TokenOutOfRange";
    case Errc::sequence_too_long: return "SequenceTooLong";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::duplicate_patch_site: return "DuplicatePatchSite";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::subspace_overflow: return "SubspaceOverflow";
    case Errc::unknown_language: return "UnknownLanguage";
    case Errc::invalid_gen_config: return "InvalidGenConfig";
    case Errc::malformed_line: return "MalformedLine";
    case Errc::non_parallel: return "NonParallel";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::unknown_token: return "UnknownToken";
    case Errc::id_mismatch: return "IdMismatch";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::empty_subset: return "EmptySubset";
    case Errc::empty_group: return "EmptyGroup";
    case Errc::no_eligible_donor: return "NoEligibleDonor";
    case Errc::empty_cell: return "EmptyCell";
    case Errc::cell_mismatch: return "CellMismatch";
    case Errc::missing_artifact: return "MissingArtifact";
    case Errc::empty_tf_set: return "EmptyTFSet";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool ok, Errc code, const std::string& message) {
  if (!ok) raise(code, message);
}

}  // namespace xlab
