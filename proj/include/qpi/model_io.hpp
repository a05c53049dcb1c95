#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "qpi/fixed_forward.hpp"
#include "qpi/model.hpp"
#include "qpi/triples.hpp"

namespace qpi {

using json = nlohmann::json;

namespace detail {

// Hex-float strings round-trip doubles exactly and stay diffable.
inline std::string double_to_hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double hex_to_double(const std::string& s) {
  size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::runtime_error("model file: bad numeric literal '" + s + "'");
  return v;
}

constexpr size_t kInlineLimit = 16;  // larger arrays go to the binary sidecar
constexpr char kSidecarMagic[4] = {'Q', 'P', 'I', 'B'};

/// Collects the large parameter arrays of one model file; flag 0 = doubles,
/// flag 1 = fixed-point u64 words.
struct BlobWriter {
  u8 flag = 0;
  std::vector<u64> words;

  json put_doubles(const std::vector<double>& v) {
    if (v.size() <= kInlineLimit) {
      json arr = json::array();
      for (double x : v) arr.push_back(double_to_hex(x));
      return arr;
    }
    json ref;
    ref["blob"] = {words.size(), v.size()};
    for (double x : v) {
      u64 bits;
      static_assert(sizeof(bits) == sizeof(x));
      std::memcpy(&bits, &x, 8);
      words.push_back(bits);
    }
    return ref;
  }

  json put_elements(const std::vector<FieldElement>& v) {
    if (v.size() <= kInlineLimit) {
      json arr = json::array();
      for (const FieldElement& e : v) arr.push_back(e.raw());
      return arr;
    }
    json ref;
    ref["blob"] = {words.size(), v.size()};
    for (const FieldElement& e : v) words.push_back(e.raw());
    return ref;
  }

  std::vector<u8> serialize() const {
    std::vector<u8> out;
    out.insert(out.end(), kSidecarMagic, kSidecarMagic + 4);
    out.push_back(1);  // version
    out.push_back(flag);
    put_u64_le(out, words.size());
    for (u64 w : words) put_u64_le(out, w);
    return out;
  }
};

struct BlobReader {
  u8 flag = 0;
  std::vector<u64> words;

  static BlobReader parse(const std::vector<u8>& bytes) {
    ByteReader r(bytes);
    for (char c : kSidecarMagic)
      if (r.read_u8() != static_cast<u8>(c)) throw std::runtime_error("sidecar: bad magic");
    if (r.read_u8() != 1) throw std::runtime_error("sidecar: unsupported version");
    BlobReader br;
    br.flag = r.read_u8();
    u64 n = r.read_u64_le();
    if (r.remaining() != n * 8) throw std::runtime_error("sidecar: size mismatch");
    br.words.reserve(n);
    for (u64 i = 0; i < n; ++i) br.words.push_back(r.read_u64_le());
    return br;
  }

  std::vector<u64> slice(const json& ref, const char* what) const {
    if (ref.is_object()) {
      u64 off = ref.at("blob").at(0).get<u64>();
      u64 n = ref.at("blob").at(1).get<u64>();
      if (off + n > words.size())
        throw std::runtime_error(std::string("model file: blob reference out of range for ") + what);
      return {words.begin() + off, words.begin() + off + n};
    }
    throw std::runtime_error(std::string("model file: expected blob reference for ") + what);
  }

  std::vector<double> get_doubles(const json& ref, const char* what) const {
    std::vector<double> out;
    if (ref.is_array()) {
      for (const json& j : ref) out.push_back(hex_to_double(j.get<std::string>()));
      return out;
    }
    for (u64 w : slice(ref, what)) {
      double v;
      std::memcpy(&v, &w, 8);
      out.push_back(v);
    }
    return out;
  }

  std::vector<FieldElement> get_elements(const json& ref, const FieldParams& fp,
                                         const char* what) const {
    std::vector<u64> raw;
    if (ref.is_array()) {
      for (const json& j : ref) raw.push_back(j.get<u64>());
    } else {
      raw = slice(ref, what);
    }
    std::vector<FieldElement> out;
    out.reserve(raw.size());
    for (u64 w : raw) {
      if (w >= fp.p) throw std::runtime_error("model file: field element exceeds modulus");
      out.push_back(FieldElement::from_raw(w, fp.p));
    }
    return out;
  }
};

inline json shape_json(const std::vector<size_t>& s) {
  json a = json::array();
  for (size_t d : s) a.push_back(d);
  return a;
}

inline std::vector<size_t> shape_from(const json& a) {
  std::vector<size_t> s;
  for (const json& j : a) s.push_back(j.get<size_t>());
  return s;
}

inline json herpn_to_json(const HerPNParams& p, BlobWriter& blob) {
  json j;
  j["channels"] = p.channels;
  j["degree"] = p.degree;
  j["eps"] = double_to_hex(p.eps);
  j["momentum"] = double_to_hex(p.momentum);
  j["training"] = p.training;
  j["stats_populated"] = p.stats_populated;
  j["coeffs"] = blob.put_doubles(p.coeffs);
  j["gamma"] = blob.put_doubles(p.gamma);
  j["beta"] = blob.put_doubles(p.beta);
  j["run_mean"] = blob.put_doubles(p.run_mean);
  j["run_var"] = blob.put_doubles(p.run_var);
  return j;
}

inline HerPNParams herpn_from_json(const json& j, const BlobReader& blob) {
  HerPNParams p;
  p.channels = j.at("channels").get<unsigned>();
  p.degree = j.at("degree").get<unsigned>();
  p.eps = hex_to_double(j.at("eps").get<std::string>());
  p.momentum = hex_to_double(j.at("momentum").get<std::string>());
  p.training = j.at("training").get<bool>();
  p.stats_populated = j.at("stats_populated").get<bool>();
  p.coeffs = blob.get_doubles(j.at("coeffs"), "coeffs");
  p.gamma = blob.get_doubles(j.at("gamma"), "gamma");
  p.beta = blob.get_doubles(j.at("beta"), "beta");
  p.run_mean = blob.get_doubles(j.at("run_mean"), "run_mean");
  p.run_var = blob.get_doubles(j.at("run_var"), "run_var");
  if (p.coeffs.size() != p.degree + 1 || p.gamma.size() != p.channels ||
      p.run_mean.size() != (p.degree + 1) * p.channels)
    throw std::runtime_error("model file: herpn parameter sizes inconsistent");
  return p;
}

inline json bn_to_json(const BatchNormParams& p, BlobWriter& blob) {
  json j;
  j["channels"] = p.channels;
  j["eps"] = double_to_hex(p.eps);
  j["momentum"] = double_to_hex(p.momentum);
  j["training"] = p.training;
  j["stats_populated"] = p.stats_populated;
  j["gamma"] = blob.put_doubles(p.gamma);
  j["beta"] = blob.put_doubles(p.beta);
  j["run_mean"] = blob.put_doubles(p.run_mean);
  j["run_var"] = blob.put_doubles(p.run_var);
  return j;
}

inline BatchNormParams bn_from_json(const json& j, const BlobReader& blob) {
  BatchNormParams p;
  p.channels = j.at("channels").get<unsigned>();
  p.eps = hex_to_double(j.at("eps").get<std::string>());
  p.momentum = hex_to_double(j.at("momentum").get<std::string>());
  p.training = j.at("training").get<bool>();
  p.stats_populated = j.at("stats_populated").get<bool>();
  p.gamma = blob.get_doubles(j.at("gamma"), "gamma");
  p.beta = blob.get_doubles(j.at("beta"), "beta");
  p.run_mean = blob.get_doubles(j.at("run_mean"), "run_mean");
  p.run_var = blob.get_doubles(j.at("run_var"), "run_var");
  if (p.gamma.size() != p.channels || p.run_mean.size() != p.channels)
    throw std::runtime_error("model file: batchnorm parameter sizes inconsistent");
  return p;
}

inline const char* variant_name(ResidualVariant v) {
  switch (v) {
    case ResidualVariant::standard: return "standard";
    case ResidualVariant::herpn: return "herpn";
    case ResidualVariant::pa_herpn: return "pa-herpn";
  }
  return "standard";
}

inline ResidualVariant variant_from(const std::string& s) {
  if (s == "standard") return ResidualVariant::standard;
  if (s == "herpn") return ResidualVariant::herpn;
  if (s == "pa-herpn") return ResidualVariant::pa_herpn;
  throw std::runtime_error("model file: unknown residual variant '" + s + "'");
}

inline json layers_to_json(const std::vector<LayerSpec>& layers, BlobWriter& blob) {
  json arr = json::array();
  for (const LayerSpec& l : layers) {
    json j;
    if (const auto* lin = std::get_if<LinearLayer>(&l.node)) {
      j["type"] = "linear";
      j["in"] = lin->in;
      j["out"] = lin->out;
      j["W"] = blob.put_doubles(lin->W);
      j["b"] = blob.put_doubles(lin->b);
    } else if (const auto* cv = std::get_if<Conv2dLayer>(&l.node)) {
      j["type"] = "conv";
      j["in_ch"] = cv->in_ch;
      j["out_ch"] = cv->out_ch;
      j["k"] = cv->k;
      j["stride"] = cv->stride;
      j["pad"] = cv->pad;
      j["W"] = blob.put_doubles(cv->W);
      j["b"] = blob.put_doubles(cv->b);
    } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l.node)) {
      j["type"] = "avgpool";
      j["k"] = ap->k;
    } else if (const auto* mp = std::get_if<MaxPoolLayer>(&l.node)) {
      j["type"] = "maxpool";
      j["k"] = mp->k;
    } else if (std::holds_alternative<FlattenLayer>(l.node)) {
      j["type"] = "flatten";
    } else if (std::holds_alternative<ReLULayer>(l.node)) {
      j["type"] = "relu";
    } else if (const auto* bn = std::get_if<BatchNormLayer>(&l.node)) {
      j["type"] = "batchnorm";
      j["params"] = bn_to_json(bn->params, blob);
    } else if (const auto* hp = std::get_if<HerPNLayer>(&l.node)) {
      j["type"] = "herpn";
      j["params"] = herpn_to_json(hp->params, blob);
    } else if (const auto* ha = std::get_if<HermiteActLayer>(&l.node)) {
      j["type"] = "hermite_act";
      j["degree"] = ha->degree;
    } else {
      const auto& rb = std::get<ResidualBlock>(l.node);
      j["type"] = "residual";
      j["variant"] = variant_name(rb.variant);
      j["post_add_relu"] = rb.post_add_relu;
      j["branch"] = layers_to_json(rb.branch, blob);
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<LayerSpec> layers_from_json(const json& arr, const BlobReader& blob) {
  std::vector<LayerSpec> out;
  for (const json& j : arr) {
    std::string type = j.at("type").get<std::string>();
    if (type == "linear") {
      LinearLayer l;
      l.in = j.at("in").get<size_t>();
      l.out = j.at("out").get<size_t>();
      l.W = blob.get_doubles(j.at("W"), "W");
      l.b = blob.get_doubles(j.at("b"), "b");
      out.push_back({std::move(l)});
    } else if (type == "conv") {
      Conv2dLayer c;
      c.in_ch = j.at("in_ch").get<size_t>();
      c.out_ch = j.at("out_ch").get<size_t>();
      c.k = j.at("k").get<size_t>();
      c.stride = j.at("stride").get<size_t>();
      c.pad = j.at("pad").get<size_t>();
      c.W = blob.get_doubles(j.at("W"), "W");
      c.b = blob.get_doubles(j.at("b"), "b");
      out.push_back({std::move(c)});
    } else if (type == "avgpool") {
      out.push_back({AvgPoolLayer{j.at("k").get<size_t>()}});
    } else if (type == "maxpool") {
      out.push_back({MaxPoolLayer{j.at("k").get<size_t>()}});
    } else if (type == "flatten") {
      out.push_back({FlattenLayer{}});
    } else if (type == "relu") {
      out.push_back({ReLULayer{}});
    } else if (type == "batchnorm") {
      out.push_back({BatchNormLayer{bn_from_json(j.at("params"), blob)}});
    } else if (type == "herpn") {
      out.push_back({HerPNLayer{herpn_from_json(j.at("params"), blob)}});
    } else if (type == "hermite_act") {
      out.push_back({HermiteActLayer{j.at("degree").get<unsigned>()}});
    } else if (type == "residual") {
      ResidualBlock rb;
      rb.variant = variant_from(j.at("variant").get<std::string>());
      rb.post_add_relu = j.at("post_add_relu").get<bool>();
      rb.branch = layers_from_json(j.at("branch"), blob);
      out.push_back({std::move(rb)});
    } else {
      throw std::runtime_error("model file: unknown layer type '" + type + "'");
    }
  }
  return out;
}

inline json qlayers_to_json(const std::vector<QLayer>& layers, BlobWriter& blob) {
  json arr = json::array();
  for (const QLayer& l : layers) {
    json j;
    if (const auto* lin = std::get_if<QLinear>(&l.node)) {
      j["type"] = "linear";
      j["in"] = lin->in;
      j["out"] = lin->out;
      j["W"] = blob.put_elements(lin->W);
      j["b"] = blob.put_elements(lin->b);
    } else if (const auto* cv = std::get_if<QConv>(&l.node)) {
      j["type"] = "conv";
      j["in_ch"] = cv->in_ch;
      j["out_ch"] = cv->out_ch;
      j["k"] = cv->k;
      j["stride"] = cv->stride;
      j["pad"] = cv->pad;
      j["W"] = blob.put_elements(cv->W);
      j["b"] = blob.put_elements(cv->b);
    } else if (const auto* ap = std::get_if<QAvgPool>(&l.node)) {
      j["type"] = "avgpool";
      j["k"] = ap->k;
      j["inv_area"] = ap->inv_area.raw();
    } else if (std::holds_alternative<QFlatten>(l.node)) {
      j["type"] = "flatten";
    } else if (const auto* act = std::get_if<QActivation>(&l.node)) {
      j["type"] = "activation";
      j["channels"] = act->channels;
      j["c2"] = blob.put_elements(act->c2);
      j["c1"] = blob.put_elements(act->c1);
      j["c0"] = blob.put_elements(act->c0);
    } else {
      const auto& rb = std::get<QResidual>(l.node);
      j["type"] = "residual";
      j["variant"] = variant_name(rb.variant);
      j["branch"] = qlayers_to_json(rb.branch, blob);
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<QLayer> qlayers_from_json(const json& arr, const BlobReader& blob,
                                             const FieldParams& fp) {
  std::vector<QLayer> out;
  for (const json& j : arr) {
    std::string type = j.at("type").get<std::string>();
    if (type == "linear") {
      QLinear l;
      l.in = j.at("in").get<size_t>();
      l.out = j.at("out").get<size_t>();
      l.W = blob.get_elements(j.at("W"), fp, "W");
      l.b = blob.get_elements(j.at("b"), fp, "b");
      out.push_back({std::move(l)});
    } else if (type == "conv") {
      QConv c;
      c.in_ch = j.at("in_ch").get<size_t>();
      c.out_ch = j.at("out_ch").get<size_t>();
      c.k = j.at("k").get<size_t>();
      c.stride = j.at("stride").get<size_t>();
      c.pad = j.at("pad").get<size_t>();
      c.W = blob.get_elements(j.at("W"), fp, "W");
      c.b = blob.get_elements(j.at("b"), fp, "b");
      out.push_back({std::move(c)});
    } else if (type == "avgpool") {
      u64 raw = j.at("inv_area").get<u64>();
      if (raw >= fp.p) throw std::runtime_error("model file: field element exceeds modulus");
      out.push_back({QAvgPool{j.at("k").get<size_t>(), FieldElement::from_raw(raw, fp.p)}});
    } else if (type == "flatten") {
      out.push_back({QFlatten{}});
    } else if (type == "activation") {
      QActivation a;
      a.channels = j.at("channels").get<unsigned>();
      a.c2 = blob.get_elements(j.at("c2"), fp, "c2");
      a.c1 = blob.get_elements(j.at("c1"), fp, "c1");
      a.c0 = blob.get_elements(j.at("c0"), fp, "c0");
      out.push_back({std::move(a)});
    } else if (type == "residual") {
      QResidual rb;
      rb.variant = variant_from(j.at("variant").get<std::string>());
      rb.branch = qlayers_from_json(j.at("branch"), blob, fp);
      out.push_back({std::move(rb)});
    } else {
      throw std::runtime_error("model file: unknown quantized layer type '" + type + "'");
    }
  }
  return out;
}

inline std::string sidecar_path(const std::string& path) { return path + ".bin"; }

inline void write_model_pair(const std::string& path, json root, const BlobWriter& blob) {
  root["format"] = "qpi-model";
  root["version"] = 1;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("model file: cannot open '" + path + "' for writing");
  f << root.dump(1) << "\n";
  if (!f) throw std::runtime_error("model file: write failed for '" + path + "'");
  if (!blob.words.empty()) write_file_bytes(sidecar_path(path), blob.serialize());
}

inline std::pair<json, BlobReader> read_model_pair(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("model file: cannot open '" + path + "'");
  json root;
  try {
    f >> root;
  } catch (const json::exception& e) {
    throw std::runtime_error("model file: '" + path + "' is not valid: " + e.what());
  }
  if (root.value("format", "") != "qpi-model" || root.value("version", 0) != 1)
    throw std::runtime_error("model file: '" + path + "' has an unsupported header");
  BlobReader blob;
  std::ifstream probe(sidecar_path(path), std::ios::binary);
  if (probe.good()) blob = BlobReader::parse(read_file_bytes(sidecar_path(path)));
  return {std::move(root), std::move(blob)};
}

}  // namespace detail

inline void save_model(const ModelGraph& m, const std::string& path) {
  detail::BlobWriter blob;
  blob.flag = 0;
  json root;
  root["kind"] = "float";
  root["name"] = m.name;
  root["input_shape"] = detail::shape_json(m.input_shape);
  root["layers"] = detail::layers_to_json(m.layers, blob);
  detail::write_model_pair(path, std::move(root), blob);
}

inline ModelGraph load_model(const std::string& path) {
  auto [root, blob] = detail::read_model_pair(path);
  if (root.value("kind", "") != "float")
    throw std::runtime_error("model file: '" + path + "' does not hold a float model");
  ModelGraph m;
  m.name = root.at("name").get<std::string>();
  m.input_shape = detail::shape_from(root.at("input_shape"));
  m.layers = detail::layers_from_json(root.at("layers"), blob);
  infer_shapes(m);
  return m;
}

inline void save_quantized(const QuantizedModel& m, const std::string& path) {
  detail::BlobWriter blob;
  blob.flag = 1;
  json root;
  root["kind"] = "fixed";
  root["name"] = m.name;
  root["input_shape"] = detail::shape_json(m.input_shape);
  root["field"] = {{"p", m.field.p}, {"frac_bits", m.field.frac_bits}};
  root["layers"] = detail::qlayers_to_json(m.layers, blob);
  detail::write_model_pair(path, std::move(root), blob);
}

inline QuantizedModel load_quantized(const std::string& path) {
  auto [root, blob] = detail::read_model_pair(path);
  if (root.value("kind", "") != "fixed")
    throw std::runtime_error("model file: '" + path + "' does not hold a quantized model");
  QuantizedModel m;
  m.name = root.at("name").get<std::string>();
  m.input_shape = detail::shape_from(root.at("input_shape"));
  m.field.p = root.at("field").at("p").get<u64>();
  m.field.frac_bits = root.at("field").at("frac_bits").get<unsigned>();
  m.field.validate();
  m.layers = detail::qlayers_from_json(root.at("layers"), blob, m.field);
  return m;
}

/// Stable identity of a quantized model: FNV-1a over its canonical
/// serialization (sorted-key JSON plus sidecar words). Both protocol parties
/// must present the same hash at the handshake.
inline u64 model_hash(const QuantizedModel& m) {
  detail::BlobWriter blob;
  blob.flag = 1;
  json root;
  root["kind"] = "fixed";
  root["name"] = m.name;
  root["input_shape"] = detail::shape_json(m.input_shape);
  root["field"] = {{"p", m.field.p}, {"frac_bits", m.field.frac_bits}};
  root["layers"] = detail::qlayers_to_json(m.layers, blob);
  std::string text = root.dump();
  std::vector<u8> bytes(text.begin(), text.end());
  std::vector<u8> side = blob.serialize();
  bytes.insert(bytes.end(), side.begin(), side.end());
  u64 h = 14695981039346656037ULL;
  for (u8 b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

// --- plain tensors and golden vectors (text, hex-float payloads) ---

inline void save_tensor_text(const Tensor& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("tensor file: cannot open '" + path + "' for writing");
  f << "qpi-tensor 1\nshape";
  for (size_t d : t.shape) f << ' ' << d;
  f << "\ndata";
  for (double v : t.data) f << ' ' << detail::double_to_hex(v);
  f << "\n";
}

namespace detail {

inline Tensor parse_tensor_stream(std::istream& f, const std::string& path) {
  std::string tok;
  f >> tok;
  if (tok != "shape") throw std::runtime_error("tensor file: '" + path + "' missing shape");
  std::string line;
  std::getline(f, line);
  std::istringstream ss(line);
  std::vector<size_t> shape;
  size_t d;
  while (ss >> d) shape.push_back(d);
  f >> tok;
  if (tok != "data") throw std::runtime_error("tensor file: '" + path + "' missing data");
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (size_t i = 0; i < shape_size(shape); ++i) {
    if (!(f >> tok)) throw std::runtime_error("tensor file: '" + path + "' truncated data");
    data.push_back(hex_to_double(tok));
  }
  return Tensor(shape, std::move(data));
}

}  // namespace detail

inline Tensor load_tensor_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("tensor file: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != "qpi-tensor" || version != 1)
    throw std::runtime_error("tensor file: '" + path + "' has an unsupported header");
  return detail::parse_tensor_stream(f, path);
}

struct GoldenVector {
  Tensor input;
  Tensor output;
  double tolerance = 0.0;
};

inline void save_golden(const GoldenVector& g, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("golden file: cannot open '" + path + "' for writing");
  f << "qpi-golden 1\n";
  auto dump = [&](const Tensor& t) {
    f << "shape";
    for (size_t d : t.shape) f << ' ' << d;
    f << "\ndata";
    for (double v : t.data) f << ' ' << detail::double_to_hex(v);
    f << "\n";
  };
  dump(g.input);
  dump(g.output);
  f << "tolerance " << detail::double_to_hex(g.tolerance) << "\n";
}

inline GoldenVector load_golden(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("golden file: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  f >> magic >> version;
  if (magic != "qpi-golden" || version != 1)
    throw std::runtime_error("golden file: '" + path + "' has an unsupported header");
  GoldenVector g;
  g.input = detail::parse_tensor_stream(f, path);
  g.output = detail::parse_tensor_stream(f, path);
  std::string tok;
  f >> tok;
  if (tok != "tolerance") throw std::runtime_error("golden file: '" + path + "' missing tolerance");
  f >> tok;
  g.tolerance = detail::hex_to_double(tok);
  return g;
}

}  // namespace qpi
