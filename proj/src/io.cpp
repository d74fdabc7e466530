#include "homog/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace homog {

namespace {

void put_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("binary field: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64_le(std::ostream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64_le(out, v);
}

double get_f64_le(std::istream& in) {
  const std::uint64_t v = get_u64_le(in);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

void write_field_binary(const std::string& path, const FieldSample& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  put_u64_le(out, static_cast<std::uint64_t>(field.grid.dim));
  put_u64_le(out, static_cast<std::uint64_t>(field.grid.side));
  put_u64_le(out, static_cast<std::uint64_t>(field.kappa));
  put_u64_le(out, field.seed);
  const std::size_t n = field.grid.sites();
  for (std::size_t s = 0; s < n; ++s)
    for (int c = 0; c < field.kappa; ++c) put_f64_le(out, field.value(c, s));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

FieldSample read_field_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  FieldSample f;
  const int d = static_cast<int>(get_u64_le(in));
  const int side = static_cast<int>(get_u64_le(in));
  f.kappa = static_cast<int>(get_u64_le(in));
  f.seed = get_u64_le(in);
  f.grid = Grid(d, side);
  const std::size_t n = f.grid.sites();
  f.values.assign(static_cast<std::size_t>(f.kappa), std::vector<double>(n));
  for (std::size_t s = 0; s < n; ++s)
    for (int c = 0; c < f.kappa; ++c) f.values[static_cast<std::size_t>(c)][s] = get_f64_le(in);
  if (!in) throw std::runtime_error("binary field: truncated data in '" + path + "'");
  return f;
}

void write_field_csv(const std::string& path, const FieldSample& field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "# d=" << field.grid.dim << " N=" << field.grid.side << " kappa=" << field.kappa
      << " seed=" << field.seed << "\n";
  for (int k = 0; k < field.grid.dim; ++k) out << "x" << k << ",";
  for (int c = 0; c < field.kappa; ++c) out << "g" << c << (c + 1 < field.kappa ? "," : "\n");
  const std::size_t n = field.grid.sites();
  char buf[32];
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = field.grid.coords(s);
    for (int k = 0; k < field.grid.dim; ++k) out << x[k] << ",";
    for (int c = 0; c < field.kappa; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", field.value(c, s));
      out << buf << (c + 1 < field.kappa ? "," : "\n");
    }
  }
}

void write_corrector_binary(const std::string& path, const CorrectorSolution& sol,
                            std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  put_u64_le(out, static_cast<std::uint64_t>(sol.grid.dim));
  put_u64_le(out, static_cast<std::uint64_t>(sol.grid.side));
  put_u64_le(out, static_cast<std::uint64_t>(sol.dim));
  put_u64_le(out, seed);
  const std::size_t n = sol.grid.sites();
  for (std::size_t s = 0; s < n; ++s)
    for (int i = 0; i < sol.dim; ++i) put_f64_le(out, sol.phi[static_cast<std::size_t>(i)][s]);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_growth_csv(const std::string& path, const GrowthTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "N,beta,mean_phi_l2,stderr,mu_reference\n";
  char buf[160];
  for (const auto& row : table.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", row.side, table.beta,
                  row.mean_phi_l2, row.se, row.mu_reference);
    out << buf;
  }
}

void write_samples_csv(const std::string& path, const EnsembleReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "beta,d,N,epsilon,F_id,sample_index,I_value\n";
  const auto& cfg = report.config;
  char buf[200];
  for (std::size_t e = 0; e < cfg.epsilons.size(); ++e)
    for (std::size_t f = 0; f < cfg.functionals.size(); ++f)
      for (std::size_t s = 0; s < report.samples.size(); ++s) {
        const auto& rec = report.samples[s];
        if (rec.failed) continue;
        std::snprintf(buf, sizeof(buf), "%.17g,%d,%d,%.17g,%s,%ld,%.17g\n", cfg.beta, cfg.dim,
                      cfg.side, cfg.epsilons[e], cfg.functionals[f].id.c_str(),
                      static_cast<long>(s), rec.I[report.flat(e, f)]);
        out << buf;
      }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_manifest(const std::string& path, const ManifestInfo& info) {
  nlohmann::json j;
  j["config_hash"] = info.config_hash;
  j["seed"] = info.seed;
  j["wall_seconds"] = info.wall_seconds;
  j["subcommand"] = info.subcommand;
  j["version"] = kVersion;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace homog
