#include "anomkit/bundle.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "anomkit/config.hpp"
#include "anomkit/errors.hpp"
#include "anomkit/tensor_io.hpp"
#include "json.hpp"

namespace anomkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Tensor to_tensor(const Matrix& m) {
  std::vector<float> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v));
}

Tensor to_tensor(const Vector& x) {
  std::vector<float> v(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<float>(x(i));
  return Tensor({static_cast<std::size_t>(x.size())}, std::move(v));
}

Tensor to_tensor(double x) { return Tensor({1}, std::vector<float>{static_cast<float>(x)}); }

Matrix to_matrix(const Tensor& t, const std::string& name) {
  if (t.rank() != 2) throw FormatError("bundle tensor " + name + " must be rank 2");
  Matrix m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t i = 0; i < t.size(); ++i) m.data()[i] = t[i];
  return m;
}

Vector to_vector(const Tensor& t, const std::string& name) {
  if (t.rank() != 1) throw FormatError("bundle tensor " + name + " must be rank 1");
  Vector v(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = t[i];
  return v;
}

double to_scalar(const Tensor& t, const std::string& name) {
  if (t.size() != 1) throw FormatError("bundle tensor " + name + " must hold one value");
  return t[0];
}

// Collects files of one stage with their checksums while writing.
class Writer {
 public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  void put(const std::string& stage, const std::string& rel, const Tensor& t) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    save_tensor(p, t);
    files_[stage]["files"][rel] = sha256_file(p);
  }
  void put_text(const std::string& stage, const std::string& rel, const std::string& text) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw FormatError("cannot write " + p.string());
    out.close();
    files_[stage]["files"][rel] = sha256_file(p);
  }
  json& stages() { return files_; }

 private:
  fs::path root_;
  json files_ = json::object();
};

class Reader {
 public:
  Reader(fs::path root, const json& stages) : root_(std::move(root)), stages_(stages) {}

  bool has(const std::string& stage) const { return stages_.contains(stage); }

  Tensor get(const std::string& stage, const std::string& rel) const {
    const auto& files = stages_.at(stage).at("files");
    if (!files.contains(rel)) throw FormatError("bundle manifest lacks " + rel);
    const fs::path p = root_ / rel;
    if (!fs::exists(p)) throw FormatError("bundle file missing: " + rel);
    if (sha256_file(p) != files.at(rel).get<std::string>())
      throw FormatError("bundle checksum mismatch for " + rel);
    return load_tensor(p);
  }

 private:
  fs::path root_;
  const json& stages_;
};

void put_network(Writer& w, const std::string& name, const Network<float>& net) {
  const auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    char rel[64];
    std::snprintf(rel, sizeof rel, "dcae/%s_%03zu.nct", name.c_str(), i);
    w.put("dcae", rel, params[i]);
  }
}

void get_network(const Reader& r, const std::string& name, Network<float>& net) {
  auto& params = net.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    char rel[64];
    std::snprintf(rel, sizeof rel, "dcae/%s_%03zu.nct", name.c_str(), i);
    Tensor t = r.get("dcae", rel);
    if (t.shape() != params[i].shape())
      throw FormatError(std::string("bundle tensor ") + rel + " has shape " + shape_to_string(t.shape()) +
                        ", expected " + shape_to_string(params[i].shape()));
    params[i] = std::move(t);
  }
  net.mark_updated();
}

Tensor log_tensor(const std::vector<EpochLog>& log) {
  Tensor t({log.size(), 4});
  for (std::size_t i = 0; i < log.size(); ++i) {
    t[4 * i] = static_cast<float>(log[i].epoch);
    t[4 * i + 1] = static_cast<float>(log[i].loss);
    t[4 * i + 2] = static_cast<float>(log[i].loss_scale1);
    t[4 * i + 3] = static_cast<float>(log[i].loss_scale2);
  }
  return t;
}

std::vector<EpochLog> epoch_log(const Tensor& t) {
  std::vector<EpochLog> log;
  if (t.rank() != 2 || t.dim(1) != 4) throw FormatError("bundle training log must be n x 4");
  for (std::size_t i = 0; i < t.dim(0); ++i)
    log.push_back({static_cast<std::size_t>(t[4 * i]), t[4 * i + 1], t[4 * i + 2], t[4 * i + 3]});
  return log;
}

void put_pca(Writer& w, const std::string& stage, const PcaBaseline& b) {
  const PcaModel* scales[2] = {&b.scale1, &b.scale2};
  for (int s = 0; s < 2; ++s) {
    const std::string pre = stage + "/scale" + std::to_string(s + 1) + "_";
    w.put(stage, pre + "mean.nct", to_tensor(scales[s]->mean));
    w.put(stage, pre + "components.nct", to_tensor(scales[s]->components));
    w.put(stage, pre + "eigenvalues.nct", to_tensor(scales[s]->eigenvalues));
    w.put(stage, pre + "retained.nct", to_tensor(scales[s]->retained_fraction));
  }
}

PcaBaseline get_pca(const Reader& r, const std::string& stage, PcaMode mode, ModelPreset preset) {
  PcaBaseline b;
  b.mode = mode;
  b.preset = preset;
  PcaModel* scales[2] = {&b.scale1, &b.scale2};
  for (int s = 0; s < 2; ++s) {
    const std::string pre = stage + "/scale" + std::to_string(s + 1) + "_";
    scales[s]->mean = to_vector(r.get(stage, pre + "mean.nct"), pre + "mean");
    scales[s]->components = to_matrix(r.get(stage, pre + "components.nct"), pre + "components");
    scales[s]->eigenvalues = to_vector(r.get(stage, pre + "eigenvalues.nct"), pre + "eigenvalues");
    scales[s]->retained_fraction = to_scalar(r.get(stage, pre + "retained.nct"), pre + "retained");
  }
  return b;
}

std::string db_trace_csv(const ClusterModel& c) {
  std::ostringstream out;
  out << "k,davies_bouldin\n";
  for (const auto& [k, db] : c.db_trace) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", db);
    out << k << ',' << buf << '\n';
  }
  return out.str();
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

BundleLock::BundleLock(const fs::path& dir) : path_(dir.string() + ".lock") {
  if (!path_.parent_path().empty()) fs::create_directories(path_.parent_path());
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw InputError("bundle " + dir.string() + " is locked by another command (" + path_.string() + ")");
  ::close(fd);
}

BundleLock::~BundleLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void save_bundle(const fs::path& dir, const Models& models) {
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  try {
    fs::create_directories(tmp);
    Writer w(tmp);
    put_network(w, "scale1", models.dcae.scale1);
    put_network(w, "scale2", models.dcae.scale2);
    put_network(w, "fusion", models.dcae.fusion);
    w.put("dcae", "dcae/log.nct", log_tensor(models.dcae.log));
    w.put("dcae", "dcae/fusion_log.nct", log_tensor(models.dcae.fusion_log));
    put_pca(w, "pca_fixed", models.pca_fixed);
    put_pca(w, "pca_var", models.pca_var);
    json meta = json::object();
    for (Method m : kMethods) {
      const std::string stage = std::string("ocsvm_") + to_string(m);
      const auto& svm = models.ocsvm(m);
      w.put(stage, stage + "/w.nct", to_tensor(svm.w));
      w.put(stage, stage + "/rho.nct", to_tensor(svm.rho));
      w.put(stage, stage + "/nu.nct", to_tensor(svm.nu));
      w.put(stage, stage + "/offset.nct", to_tensor(svm.standardizer.offset));
      w.put(stage, stage + "/scale.nct", to_tensor(svm.standardizer.scale));
      meta[stage] = {{"iterations", svm.iterations}, {"kkt_violation", svm.kkt_violation},
                     {"warnings", svm.warnings}};
    }
    if (models.cluster) {
      const auto& c = *models.cluster;
      Tensor trace({c.db_trace.size(), 2});
      for (std::size_t i = 0; i < c.db_trace.size(); ++i) {
        trace[2 * i] = static_cast<float>(c.db_trace[i].first);
        trace[2 * i + 1] = static_cast<float>(c.db_trace[i].second);
      }
      w.put("cluster", "cluster/centroids.nct", to_tensor(c.centroids));
      w.put("cluster", "cluster/db_trace.nct", trace);
      w.put_text("cluster", "cluster/db_trace.csv", db_trace_csv(c));
      meta["cluster"] = {{"k", c.k}};
    }
    const json manifest{{"format", "anomkit-bundle"},
                        {"format_version", kBundleFormatVersion},
                        {"preset", to_string(models.config.preset)},
                        {"config", json::parse(config_to_json(models.config))},
                        {"stages", w.stages()},
                        {"meta", meta}};
    std::ofstream out(tmp / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    out.close();
    if (!out) throw FormatError("cannot write bundle manifest");
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

Models load_bundle(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InputError("no bundle manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("bundle manifest is not valid JSON: ") + e.what());
  }
  try {
    if (manifest.at("format") != "anomkit-bundle") throw FormatError("not an anomkit bundle");
    if (manifest.at("format_version") != kBundleFormatVersion)
      throw FormatError("unsupported bundle format version " + manifest.at("format_version").dump());
    Models m;
    m.config = parse_config(manifest.at("config").dump());
    const json& stages = manifest.at("stages");
    const json& meta = manifest.at("meta");
    Reader r(dir, stages);
    Rng init(0);  // parameters are overwritten from the bundle
    m.dcae = build_model(m.config.preset, init, m.config.model);
    get_network(r, "scale1", m.dcae.scale1);
    get_network(r, "scale2", m.dcae.scale2);
    get_network(r, "fusion", m.dcae.fusion);
    m.dcae.log = epoch_log(r.get("dcae", "dcae/log.nct"));
    m.dcae.fusion_log = epoch_log(r.get("dcae", "dcae/fusion_log.nct"));
    m.dcae.scales_trained = m.dcae.fusion_trained = true;
    m.pca_fixed = get_pca(r, "pca_fixed", PcaMode::fixed_k, m.config.preset);
    m.pca_var = get_pca(r, "pca_var", PcaMode::variance_frac, m.config.preset);
    for (Method method : kMethods) {
      const std::string stage = std::string("ocsvm_") + to_string(method);
      auto& svm = m.svm[static_cast<std::size_t>(method)];
      svm.w = to_vector(r.get(stage, stage + "/w.nct"), stage + "/w");
      svm.rho = to_scalar(r.get(stage, stage + "/rho.nct"), stage + "/rho");
      to_scalar(r.get(stage, stage + "/nu.nct"), stage + "/nu");  // checked; exact value lives in the config
      svm.standardizer.offset = to_vector(r.get(stage, stage + "/offset.nct"), stage + "/offset");
      svm.standardizer.scale = to_vector(r.get(stage, stage + "/scale.nct"), stage + "/scale");
      svm.nu = m.config.nu;
      svm.iterations = meta.at(stage).at("iterations").get<std::size_t>();
      svm.kkt_violation = meta.at(stage).at("kkt_violation").get<double>();
      svm.warnings = meta.at(stage).at("warnings").get<std::vector<std::string>>();
    }
    if (r.has("cluster")) {
      ClusterModel c;
      c.centroids = to_matrix(r.get("cluster", "cluster/centroids.nct"), "cluster/centroids");
      c.k = meta.at("cluster").at("k").get<std::size_t>();
      const Tensor trace = r.get("cluster", "cluster/db_trace.nct");
      for (std::size_t i = 0; i + 1 < trace.size(); i += 2)
        c.db_trace.emplace_back(static_cast<std::size_t>(trace[i]), trace[i + 1]);
      m.cluster = std::move(c);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bundle manifest is malformed: ") + e.what());
  }
}

}  // namespace anomkit
