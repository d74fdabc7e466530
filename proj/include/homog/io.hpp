#ifndef HOMOG_IO_HPP
#define HOMOG_IO_HPP

#include <string>
#include <vector>

#include "homog/corrector.hpp"
#include "homog/covariance.hpp"
#include "homog/ensemble.hpp"

namespace homog {

constexpr const char* kVersion = "1.0.0";

/// Flat binary snapshot: header of four little-endian u64 (d, N, kappa,
/// seed) followed by N^d * kappa little-endian f64, row-major over sites
/// with the component index fastest.
void write_field_binary(const std::string& path, const FieldSample& field);
FieldSample read_field_binary(const std::string& path);

/// CSV with one site per row: coordinates then the kappa components.
void write_field_csv(const std::string& path, const FieldSample& field);

/// Corrector snapshot in the same flat binary layout, channels
/// (phi_1..phi_d) per site.
void write_corrector_binary(const std::string& path, const CorrectorSolution& sol,
                            std::uint64_t seed);

/// CSV columns: N,beta,mean_phi_l2,stderr,mu_reference.
void write_growth_csv(const std::string& path, const GrowthTable& table);

/// CSV columns: beta,d,N,epsilon,F_id,sample_index,I_value.
void write_samples_csv(const std::string& path, const EnsembleReport& report);

/// Serializes `content` (JSON text) plus a run manifest next to it.
void write_text_file(const std::string& path, const std::string& content);

struct ManifestInfo {
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string subcommand;
};
void write_manifest(const std::string& path, const ManifestInfo& info);

}  // namespace homog

#endif
