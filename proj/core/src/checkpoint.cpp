#include "unidg/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "unidg/error.hpp"

namespace unidg {

namespace {

void write_values(std::ostream& os, std::span<const double> values) {
  char buf[64];
  for (double v : values) {
    std::snprintf(buf, sizeof buf, " %a", v);
    os << buf;
  }
  os << '\n';
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::istringstream next(const std::string& expected_key) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key != expected_key) {
        throw ParseError("checkpoint: expected '" + expected_key + "', found '" + key + "'",
                         line_no_);
      }
      return ls;
    }
    throw ParseError("checkpoint: unexpected end of file, expected '" + expected_key + "'",
                     line_no_);
  }

  std::size_t line() const noexcept { return line_no_; }

 private:
  std::istringstream in_;
  std::size_t line_no_ = 0;
};

std::vector<double> read_values(std::istringstream& ls, std::size_t n, std::size_t line) {
  std::vector<double> out;
  out.reserve(n);
  std::string tok;
  while (ls >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw ParseError("checkpoint: malformed number '" + tok + "'", line);
    }
    out.push_back(v);
  }
  if (out.size() != n) {
    throw ParseError("checkpoint: expected " + std::to_string(n) + " values, found " +
                         std::to_string(out.size()),
                     line);
  }
  return out;
}

template <typename T>
T read_scalar(std::istringstream& ls, std::size_t line, const char* what) {
  T v{};
  if (!(ls >> v)) throw ParseError(std::string("checkpoint: bad ") + what, line);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream os;
  const auto& enc = ckpt.encoder;
  os << "unidg-checkpoint " << kCheckpointVersion << '\n';
  os << "seed " << ckpt.seed << '\n';
  os << "dims";
  for (auto d : enc.dims()) os << ' ' << d;
  os << '\n';
  os << "norm " << (enc.has_norm() ? 1 : 0) << '\n';
  os << "classes " << ckpt.classifier.num_classes() << '\n';
  for (std::size_t l = 0; l < enc.num_layers(); ++l) {
    const auto& L = enc.layers()[l];
    os << "weight";
    write_values(os, L.weight.values());
    os << "bias";
    write_values(os, L.bias);
  }
  for (const auto& n : enc.norms()) {
    os << "norm_eps";
    write_values(os, std::span<const double>(&n.eps, 1));
    os << "norm_momentum";
    write_values(os, std::span<const double>(&n.momentum, 1));
    os << "gamma";
    write_values(os, n.gamma);
    os << "beta";
    write_values(os, n.beta);
    os << "running_mean";
    write_values(os, n.running_mean);
    os << "running_var";
    write_values(os, n.running_var);
  }
  os << "omega";
  write_values(os, ckpt.classifier.omega().values());
  os << "classifier_bias";
  write_values(os, ckpt.classifier.bias());
  os << "end\n";
  return os.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  LineReader r(text);
  {
    auto ls = r.next("unidg-checkpoint");
    const int version = read_scalar<int>(ls, r.line(), "version");
    if (version != kCheckpointVersion) {
      throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
    }
  }
  Checkpoint ck;
  {
    auto ls = r.next("seed");
    ck.seed = read_scalar<std::uint64_t>(ls, r.line(), "seed");
  }
  std::vector<std::size_t> dims;
  {
    auto ls = r.next("dims");
    std::size_t d;
    while (ls >> d) dims.push_back(d);
    if (dims.size() < 2) throw ParseError("checkpoint: need at least two dims", r.line());
  }
  bool with_norm = false;
  {
    auto ls = r.next("norm");
    with_norm = read_scalar<int>(ls, r.line(), "norm flag") != 0;
  }
  std::size_t classes = 0;
  {
    auto ls = r.next("classes");
    classes = read_scalar<std::size_t>(ls, r.line(), "class count");
  }

  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    auto lw = r.next("weight");
    auto w = read_values(lw, dims[l] * dims[l + 1], r.line());
    auto lb = r.next("bias");
    auto b = read_values(lb, dims[l + 1], r.line());
    layers.push_back({Tensor2(dims[l], dims[l + 1], std::move(w)), std::move(b)});
  }
  std::vector<NormLayerState> norms;
  if (with_norm) {
    for (std::size_t l = 0; l + 2 < dims.size(); ++l) {
      const std::size_t width = dims[l + 1];
      NormLayerState n;
      auto le = r.next("norm_eps");
      n.eps = read_values(le, 1, r.line())[0];
      auto lm = r.next("norm_momentum");
      n.momentum = read_values(lm, 1, r.line())[0];
      auto lg = r.next("gamma");
      n.gamma = read_values(lg, width, r.line());
      auto lbeta = r.next("beta");
      n.beta = read_values(lbeta, width, r.line());
      auto lrm = r.next("running_mean");
      n.running_mean = read_values(lrm, width, r.line());
      auto lrv = r.next("running_var");
      n.running_var = read_values(lrv, width, r.line());
      norms.push_back(std::move(n));
    }
  }
  ck.encoder = MlpEncoder(std::move(layers), std::move(norms));

  auto lo = r.next("omega");
  auto omega = read_values(lo, dims.back() * classes, r.line());
  auto lcb = r.next("classifier_bias");
  auto cb = read_values(lcb, classes, r.line());
  ck.classifier = LinearClassifier(Tensor2(dims.back(), classes, std::move(omega)), std::move(cb));
  r.next("end");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(ckpt);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace unidg
