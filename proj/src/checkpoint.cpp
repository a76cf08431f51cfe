#include "tfcodit/checkpoint.hpp"

#include "tfcodit/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tfcodit::checkpoint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_stem(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    if (c == '/' || c == '\\') c = '_';
  }
  return s;
}

std::uint32_t to_le(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    x = ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
  }
  return x;
}

}  // namespace

void write_f32(const fs::path& file, const Mat& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file.string());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
    out.write(reinterpret_cast<const char*>(&bits), 4);
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + file.string());
}

Mat read_f32(const fs::path& file, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + file.string());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), 4);
    if (!in) throw Error(ErrorCode::Io, "truncated tensor file " + file.string());
    m.data()[i] = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::ConfigShapeMismatch, "tensor file larger than declared: " + file.string());
  }
  return m;
}

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, file.string() + ": " + e.what());
  }
}

void save(const fs::path& dir, const ag::ParamStore& params, const optim::AdamW* optimizer,
          const json& config, const json& extra) {
  fs::create_directories(dir / "tensors");
  json tensors = json::array();
  std::uint64_t offset = 0;
  auto emit = [&](const std::string& name, const std::string& group, const Mat& m) {
    const std::string rel = "tensors/" + file_stem(name) + (group == "param" ? "" : "." + group) + ".f32";
    write_f32(dir / rel, m);
    const std::uint64_t nbytes = static_cast<std::uint64_t>(m.size()) * 4;
    tensors.push_back({{"name", name},
                       {"group", group},
                       {"shape", {m.rows(), m.cols()}},
                       {"dtype", "float32"},
                       {"file", rel},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
  };
  const auto all = params.all();
  for (const ag::Parameter* p : all) emit(p->name, "param", p->value);
  json manifest{{"format", "tfcodit-checkpoint"},
                {"version", 1},
                {"byte_order", "little"},
                {"config", config},
                {"frozen", json::array()}};
  for (const ag::Parameter* p : all) {
    if (!p->trainable) manifest["frozen"].push_back(p->name);
  }
  if (optimizer != nullptr) {
    const optim::AdamW* opt = optimizer;
    for (std::size_t i = 0; i < all.size(); ++i) {
      emit(all[i]->name, "adam_m", opt->first_moments()[i]);
      emit(all[i]->name, "adam_v", opt->second_moments()[i]);
    }
    manifest["optimizer"] = {{"kind", "adamw"}, {"step", opt->steps()}, {"config", opt->config()}};
  }
  manifest["tensors"] = tensors;
  manifest["total_bytes"] = offset;
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  write_json(dir / "manifest.json", manifest);
}

json read_manifest(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) {
    throw Error(ErrorCode::UntrainedParams, "no checkpoint manifest in " + dir.string());
  }
  return read_json(dir / "manifest.json");
}

json load(const fs::path& dir, ag::ParamStore& params, optim::AdamW* optimizer) {
  json manifest = read_manifest(dir);
  auto all = params.all();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < all.size(); ++i) index[all[i]->name] = i;
  std::size_t seen = 0;
  for (const json& t : manifest.at("tensors")) {
    const std::string name = t.at("name");
    const std::string group = t.at("group");
    auto it = index.find(name);
    if (it == index.end()) {
      throw Error(ErrorCode::ConfigShapeMismatch, "checkpoint tensor '" + name + "' not in model");
    }
    ag::Parameter& p = *all[it->second];
    const Eigen::Index rows = t.at("shape")[0], cols = t.at("shape")[1];
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw Error(ErrorCode::ConfigShapeMismatch, "shape mismatch for '" + name + "'");
    }
    Mat m = read_f32(dir / t.at("file").get<std::string>(), rows, cols);
    if (group == "param") {
      p.value = std::move(m);
      ++seen;
    } else if (optimizer != nullptr && group == "adam_m") {
      optimizer->first_moments()[it->second] = std::move(m);
    } else if (optimizer != nullptr && group == "adam_v") {
      optimizer->second_moments()[it->second] = std::move(m);
    }
  }
  if (seen != all.size()) {
    throw Error(ErrorCode::ConfigShapeMismatch, "checkpoint is missing model tensors");
  }
  if (optimizer != nullptr && manifest.contains("optimizer")) {
    optimizer->set_steps(manifest["optimizer"].at("step").get<int>());
  }
  return manifest;
}

}  // namespace tfcodit::checkpoint
