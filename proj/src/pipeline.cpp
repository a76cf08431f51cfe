#include "tfcodit/pipeline.hpp"

#include "tfcodit/checkpoint.hpp"
#include "tfcodit/errors.hpp"
#include "tfcodit/sampler.hpp"
#include "tfcodit/signal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

namespace tfcodit::pipeline {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string price(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

std::string stem_of(Contract c, const std::optional<Date>& d, int index) {
  return std::string(to_string(c)) + "_" + (d ? format_date(*d) : "i" + std::to_string(index));
}

// Daily documents keyed by date.
std::map<std::string, conditioning::Document> load_daily(const fs::path& dir) {
  std::map<std::string, conditioning::Document> out;
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto d = conditioning::read_document(f.string());
    out[format_date(d.span.start)] = std::move(d);
  }
  return out;
}

std::vector<conditioning::Document> daily_for_steps(
    const TimeSeries& s, const std::map<std::string, conditioning::Document>& docs) {
  std::vector<conditioning::Document> out;
  out.reserve(static_cast<std::size_t>(s.steps()));
  for (int t = 0; t < s.steps(); ++t) {
    const Date date = s.dates.empty() ? Date{} : s.dates[static_cast<std::size_t>(t)];
    auto it = docs.find(format_date(date));
    out.push_back(it != docs.end() ? it->second : conditioning::daily_document(date));
  }
  return out;
}

TimeSeries read_normalized(const fs::path& p, Contract c) {
  if (!fs::exists(p)) throw Error(ErrorCode::MissingData, p.string() + " (run preprocess first)");
  return preprocess::read_series_csv(p, c, true);
}

void write_log(const fs::path& file, const std::vector<train::LogRow>& rows, const std::string& a,
               const std::string& b) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file.string());
  train::write_log_csv(out, rows, a, b);
}

std::vector<train::LogRow> append_log(const fs::path& file, std::vector<train::LogRow> rows) {
  // keeps the rows logged before a resume
  std::vector<train::LogRow> all;
  std::ifstream in(file);
  std::string line;
  if (in && std::getline(in, line)) {
    while (std::getline(in, line)) {
      train::LogRow r;
      if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &r.step, &r.loss, &r.term_a,
                      &r.term_b, &r.lr, &r.grad_norm) == 6) {
        if (rows.empty() || r.step < rows.front().step) all.push_back(r);
      }
    }
  }
  all.insert(all.end(), rows.begin(), rows.end());
  return all;
}

}  // namespace

std::vector<conditioning::Document> regime_documents(const synthetic::Corpus& corpus,
                                                     const synthetic::CorpusSpec& spec) {
  nn::Rng rng = nn::make_rng(spec.seed, 0xF1AA);
  std::uniform_int_distribution<int> injection(50, 500);
  std::uniform_real_distribution<double> vol(1.5, 3.5);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::vector<std::string> events = {"cpi release", "pmi release", "bond auction",
                                           "policy meeting"};
  std::vector<conditioning::Document> docs;
  docs.reserve(corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    const auto& regime = spec.regimes.at(static_cast<std::size_t>(corpus.regime[i]));
    conditioning::Document d = conditioning::daily_document(r.date);
    const double drift = regime.drift;
    const std::string tone = drift > 0 ? "bullish" : drift < 0 ? "bearish" : "neutral";
    const std::string factors = drift > 0   ? "yields falling as futures rally"
                                : drift < 0 ? "yields rising as futures sell off"
                                            : "yields range bound";
    d.set("Sentiment", "MS", tone + " tone in a " + regime.label + " regime");
    d.set("RatesBonds", "DF", factors);
    d.set("RatesBonds", "FP", "open=" + price(r.open) + " high=" + price(r.high) +
                                  " low=" + price(r.low) + " close=" + price(r.close));
    d.set("Liquidity", "CBO", "net injection " + std::to_string(injection(rng)) + " billion");
    char v[32];
    std::snprintf(v, sizeof v, "%.1f", vol(rng));
    d.set("Derivatives", "VOL", std::string("implied vol ") + v + "%");
    if (u01(rng) < 0.15) {
      d.set("Events", "ME", events[static_cast<std::size_t>(u01(rng) * events.size()) % events.size()]);
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

preprocess::NormalizationState window_anchors(const preprocess::NormalizationState& state,
                                              int start) {
  if (start < 0 || start >= static_cast<int>(state.prev_open.size())) {
    throw Error(ErrorCode::MissingAnchor, "no anchor for window start " + std::to_string(start));
  }
  preprocess::NormalizationState a;
  const auto s = static_cast<std::size_t>(start);
  a.anchor_open = state.prev_open[s];
  a.anchor_open_interest = state.prev_open_interest[s];
  if (start == 0) {
    a.anchor_date = state.anchor_date;
  } else if (s - 1 < state.dates.size()) {
    a.anchor_date = state.dates[s - 1];
  }
  return a;
}

Windows make_windows(const TimeSeries& normalized, int horizon, int level, int stride) {
  Windows w;
  w.samples = preprocess::make_windows(normalized, horizon, stride);
  signal::DecompositionConfig dwt;
  dwt.level = level;
  w.grids.reserve(w.samples.size());
  for (const auto& s : w.samples) w.grids.push_back(signal::dwt_decompose(s.series, dwt));
  return w;
}

conditioning::Document window_prompt(const std::vector<conditioning::Document>& daily, int start,
                                     int horizon, int block, std::size_t item_budget) {
  if (start < 0 || start + horizon > static_cast<int>(daily.size())) {
    throw Error(ErrorCode::MissingData, "daily documents do not cover the window");
  }
  std::vector<conditioning::Document> docs(daily.begin() + start, daily.begin() + start + horizon);
  // trading-day spans: each document ends where the next begins
  for (std::size_t i = 0; i + 1 < docs.size(); ++i) docs[i].span.end = docs[i + 1].span.start;
  docs.back().span.end = next_business_day(docs.back().span.start);
  conditioning::AggregationOptions opt;
  opt.item_budget = item_budget;
  return conditioning::window_prompt(docs, block, opt);
}

train::LoopConfig loop_config(const config::TrainSettings& t, std::uint64_t seed) {
  train::LoopConfig c;
  c.steps = t.steps;
  c.batch = t.batch;
  c.adam = t.adam;
  c.schedule = config::schedule_for(t);
  c.seed = seed;
  c.log_every = t.log_every;
  return c;
}

// U-VAE runs.

VaeRun train_vae(const config::RunConfig& cfg, const std::vector<signal::WaveletGrid>& grids,
                 const fs::path& resume, const Progress& progress) {
  if (grids.empty()) throw Error(ErrorCode::MissingData, "no VAE training windows");
  VaeRun run;
  if (!resume.empty()) {
    const json manifest = checkpoint::read_manifest(resume);
    const auto vcfg = manifest.at("config").get<uvae::UVaeConfig>();
    if (vcfg.horizon != cfg.vae.horizon || vcfg.level != cfg.vae.level) {
      throw Error(ErrorCode::ConfigShapeMismatch, "checkpoint horizon/level differ from config");
    }
    run.model = uvae::Model::create(vcfg, cfg.seed);
    run.opt = std::make_unique<optim::AdamW>(run.model->params(), cfg.train_vae.adam);
    checkpoint::load(resume, run.model->params(), run.opt.get());
    say(progress, "resuming U-VAE at step " + std::to_string(run.opt->steps()));
  } else {
    run.model = uvae::Model::create(cfg.vae, cfg.seed);
    run.model->fit_normalizer(grids);
    run.opt = std::make_unique<optim::AdamW>(run.model->params(), cfg.train_vae.adam);
  }
  const auto loop = loop_config(cfg.train_vae, nn::mix_seed(cfg.seed, 0x7AE));
  run.log = train::train_vae(*run.model, *run.opt, grids, loop, cfg.train_vae.steps, {},
                             [&](const train::LogRow& r) {
                               char buf[128];
                               std::snprintf(buf, sizeof buf, "vae step %d loss %.5f recon %.5f kl %.3f",
                                             r.step, r.loss, r.term_a, r.term_b);
                               say(progress, buf);
                             });
  return run;
}

void save_vae(const fs::path& dir, const VaeRun& run) {
  checkpoint::save(dir, run.model->params(), run.opt.get(), run.model->config(),
                   {{"kind", "uvae"}});
  write_log(dir / "train_log.csv", append_log(dir / "train_log.csv", run.log), "recon", "kl");
}

std::unique_ptr<uvae::Model> load_vae(const fs::path& dir, optim::AdamW* opt) {
  const json manifest = checkpoint::read_manifest(dir);
  auto model = uvae::Model::create(manifest.at("config").get<uvae::UVaeConfig>(), 0);
  checkpoint::load(dir, model->params(), opt);
  return model;
}

// Diffusion runs.

std::vector<Mat> encode_means(const uvae::Model& vae, const std::vector<signal::WaveletGrid>& grids) {
  std::vector<Mat> out;
  out.reserve(grids.size());
  for (const auto& g : grids) out.push_back(vae.encode(g).mu);
  return out;
}

double latent_scale(const std::vector<Mat>& means) {
  double sum = 0, sq = 0, n = 0;
  for (const auto& m : means) {
    sum += m.sum();
    sq += m.squaredNorm();
    n += static_cast<double>(m.size());
  }
  if (n < 2) return 1.0;
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  return var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
}

std::vector<train::LogRow> train_diffusion(diffusion::Denoiser& model, optim::AdamW& opt,
                                           const std::vector<diffusion::Example>& data,
                                           const diffusion::NoiseSchedule& schedule,
                                           const train::LoopConfig& cfg, int until,
                                           const std::function<void(const train::LogRow&)>& on_log) {
  if (data.empty()) throw Error(ErrorCode::MissingData, "no diffusion training examples");
  std::vector<train::LogRow> log;
  for (int step = opt.steps(); step < until; ++step) {
    nn::Rng rng = nn::make_rng(cfg.seed, static_cast<std::uint64_t>(step));
    auto ids = train::batch_indices(rng, static_cast<int>(data.size()), cfg.batch);
    std::vector<diffusion::Example> batch;
    batch.reserve(ids.size());
    for (int id : ids) batch.push_back(data[static_cast<std::size_t>(id)]);
    model.params().zero_grad();
    auto res = diffusion::diffusion_loss(model, batch, schedule, rng, true);
    train::LogRow row;
    row.step = step;
    row.loss = res.loss;
    row.term_a = res.uncond;
    row.lr = optim::learning_rate(cfg.schedule, cfg.adam.lr, step);
    row.grad_norm = opt.step(row.lr);
    const bool last = step + 1 == until;
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || last)) {
      log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return log;
}

DiffusionRun train_diffusion_run(const config::RunConfig& cfg, const uvae::Model& vae,
                                 const std::vector<signal::WaveletGrid>& grids,
                                 const std::vector<conditioning::Document>& prompts,
                                 const fs::path& resume, const Progress& progress) {
  if (grids.size() != prompts.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one prompt per training window required");
  }
  DiffusionRun run;
  diffusion::DenoiserConfig dcfg = cfg.denoiser;
  if (!resume.empty()) {
    run = load_diffusion(resume, true);
    say(progress, "resuming diffusion at step " + std::to_string(run.opt->steps()));
  } else {
    run.vocab = conditioning::Vocabulary::build(prompts);
    dcfg.vocab_size = run.vocab.size();
    dcfg.null_token = conditioning::kNull;
    run.schedule = diffusion::NoiseSchedule(cfg.noise);
    run.model = diffusion::Denoiser::create(dcfg, nn::mix_seed(cfg.seed, 0xD1F));
    run.model->apply_freeze();
    run.opt = std::make_unique<optim::AdamW>(run.model->params(), cfg.train_diffusion.adam);
  }
  const auto means = encode_means(vae, grids);
  if (resume.empty()) run.latent_scale = latent_scale(means);
  std::vector<diffusion::Example> data;
  data.reserve(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    diffusion::Example ex;
    ex.z0 = uvae::to_latent_grid(means[i], vae.config()) * run.latent_scale;
    ex.tokens = conditioning::tokenize(prompts[i], run.vocab, run.model->config().max_text);
    data.push_back(std::move(ex));
  }
  const auto loop = loop_config(cfg.train_diffusion, nn::mix_seed(cfg.seed, 0xD1F5));
  run.log = train_diffusion(*run.model, *run.opt, data, run.schedule, loop,
                            cfg.train_diffusion.steps, [&](const train::LogRow& r) {
                              char buf[128];
                              std::snprintf(buf, sizeof buf, "diffusion step %d loss %.5f lr %.2e",
                                            r.step, r.loss, r.lr);
                              say(progress, buf);
                            });
  return run;
}

void save_diffusion(const fs::path& dir, const DiffusionRun& run) {
  json config = {{"denoiser", run.model->config()}, {"noise", run.schedule.config()}};
  checkpoint::save(dir, run.model->params(), run.opt.get(), config,
                   {{"kind", "denoiser"}, {"latent_scale", run.latent_scale}});
  run.vocab.save((dir / "vocab.txt").string());
  write_log(dir / "train_log.csv", append_log(dir / "train_log.csv", run.log), "uncond", "unused");
}

DiffusionRun load_diffusion(const fs::path& dir, bool with_optimizer) {
  const json manifest = checkpoint::read_manifest(dir);
  DiffusionRun run;
  const auto dcfg = manifest.at("config").at("denoiser").get<diffusion::DenoiserConfig>();
  run.schedule = diffusion::NoiseSchedule(manifest.at("config").at("noise").get<diffusion::ScheduleConfig>());
  run.latent_scale = manifest.value("latent_scale", 1.0);
  run.vocab = conditioning::Vocabulary::load((dir / "vocab.txt").string());
  if (run.vocab.size() != dcfg.vocab_size) {
    throw Error(ErrorCode::ConfigShapeMismatch, "vocabulary size differs from the text table");
  }
  run.model = diffusion::Denoiser::create(dcfg, 0);
  run.model->apply_freeze();
  if (with_optimizer) {
    optim::AdamWConfig adam;
    if (manifest.contains("optimizer") && manifest["optimizer"].contains("config")) {
      adam = manifest["optimizer"]["config"].get<optim::AdamWConfig>();
    }
    run.opt = std::make_unique<optim::AdamW>(run.model->params(), adam);
  }
  checkpoint::load(dir, run.model->params(), run.opt.get());
  return run;
}

// File-based commands.

fs::path raw_path(const config::RunConfig& cfg) {
  return fs::path(cfg.paths.data_dir) / "raw" / (std::string(to_string(cfg.contract)) + ".csv");
}
fs::path prompt_dir(const config::RunConfig& cfg) {
  return cfg.paths.prompt_dir.empty() ? fs::path(cfg.paths.data_dir) / "prompts"
                                      : fs::path(cfg.paths.prompt_dir);
}
fs::path processed_dir(const config::RunConfig& cfg) {
  return fs::path(cfg.paths.data_dir) / "processed" / std::string(to_string(cfg.contract));
}
fs::path test_dir(const config::RunConfig& cfg) {
  return processed_dir(cfg) / ("test_L" + std::to_string(cfg.horizon));
}
fs::path vae_dir(const config::RunConfig& cfg) {
  return fs::path(cfg.paths.checkpoint_dir) /
         ("vae_" + std::string(to_string(cfg.contract)) + "_L" + std::to_string(cfg.horizon));
}
fs::path diffusion_dir(const config::RunConfig& cfg) {
  return fs::path(cfg.paths.checkpoint_dir) /
         ("diffusion_" + std::string(to_string(cfg.contract)) + "_L" + std::to_string(cfg.horizon));
}
fs::path generated_dir(const config::RunConfig& cfg) {
  return fs::path(cfg.paths.output_dir) / "generated" /
         (std::string(to_string(cfg.contract)) + "_L" + std::to_string(cfg.horizon));
}

json anchors_to_json(const preprocess::NormalizationState& s) {
  return {{"anchor_date", format_date(s.anchor_date)},
          {"anchor_open", s.anchor_open},
          {"anchor_open_interest", s.anchor_open_interest}};
}

preprocess::NormalizationState anchors_from_json(const json& j) {
  preprocess::NormalizationState s;
  try {
    s.anchor_date = parse_date(j.at("anchor_date").get<std::string>());
    s.anchor_open = j.at("anchor_open").get<double>();
    s.anchor_open_interest = j.at("anchor_open_interest").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingAnchor, e.what());
  }
  return s;
}

void cmd_gen_synthetic(const config::RunConfig& cfg) {
  synthetic::CorpusSpec spec = cfg.synthetic;
  spec.contract = cfg.contract;
  const auto corpus = synthetic::generate(spec);
  const auto docs = regime_documents(corpus, spec);
  const fs::path data(cfg.paths.data_dir);
  fs::create_directories(data / "raw");
  preprocess::write_records_csv(raw_path(cfg), corpus.records);
  const fs::path daily = prompt_dir(cfg) / "daily";
  fs::create_directories(daily);
  for (const auto& d : docs) {
    conditioning::write_document((daily / (format_date(d.span.start) + ".json")).string(), d);
  }
  std::ofstream reg(data / "regimes.csv");
  if (!reg) throw Error(ErrorCode::Io, "cannot write regimes.csv");
  reg << "date,regime\n";
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    reg << format_date(corpus.records[i].date) << ","
        << spec.regimes[static_cast<std::size_t>(corpus.regime[i])].label << "\n";
  }
  json sj = spec;
  checkpoint::write_json(data / "synthetic_spec.json", sj);
}

void cmd_preprocess(const config::RunConfig& cfg) {
  const fs::path raw = raw_path(cfg);
  if (!fs::exists(raw)) throw Error(ErrorCode::MissingData, raw.string());
  const auto records = preprocess::read_records_csv(raw);
  const auto norm = preprocess::normalize(records, cfg.contract);
  const auto split = preprocess::split_train_test(norm.series, cfg.test_days);
  const fs::path out = processed_dir(cfg);
  fs::create_directories(out);
  preprocess::write_series_csv(out / "train.csv", split.train);
  preprocess::write_series_csv(out / "test.csv", split.test);
  json state = anchors_to_json(norm.state);
  state["steps"] = norm.series.steps();
  state["train_steps"] = split.train.steps();
  state["prev_open"] = norm.state.prev_open;
  state["prev_open_interest"] = norm.state.prev_open_interest;
  checkpoint::write_json(out / "state.json", state);

  // non-overlapping evaluation windows with their prompts and anchors
  const fs::path tdir = test_dir(cfg);
  fs::remove_all(tdir);
  fs::create_directories(tdir / "prompts");
  const auto docs = daily_for_steps(norm.series, load_daily(prompt_dir(cfg) / "daily"));
  const int offset = split.train.steps();
  for (const auto& w : preprocess::make_windows(split.test, cfg.horizon, cfg.horizon)) {
    const int start = offset + w.start_index;
    const std::string stem = stem_of(cfg.contract, w.start_date, start);
    preprocess::write_series_csv(tdir / (stem + ".csv"), w.series);
    const auto prompt = window_prompt(docs, start, cfg.horizon, cfg.prompt_block,
                                      static_cast<std::size_t>(cfg.prompt_item_budget));
    conditioning::write_document((tdir / "prompts" / (stem + ".json")).string(), prompt);
    checkpoint::write_json(tdir / "prompts" / (stem + ".anchor.json"),
                           anchors_to_json(window_anchors(norm.state, start)));
  }
}

std::vector<train::LogRow> cmd_train_vae(const config::RunConfig& cfg, bool resume,
                                         const Progress& progress) {
  const auto train = read_normalized(processed_dir(cfg) / "train.csv", cfg.contract);
  const auto windows = make_windows(train, cfg.horizon, cfg.level, cfg.stride);
  const fs::path dir = vae_dir(cfg);
  const bool has = fs::exists(dir / "manifest.json");
  auto run = train_vae(cfg, windows.grids, resume && has ? dir : fs::path{}, progress);
  save_vae(dir, run);
  return run.log;
}

std::vector<train::LogRow> cmd_train_diffusion(const config::RunConfig& cfg, bool resume,
                                               const Progress& progress) {
  const fs::path vdir = vae_dir(cfg);
  if (!fs::exists(vdir / "manifest.json")) {
    throw Error(ErrorCode::MissingData, vdir.string() + " (run train-vae first)");
  }
  auto vae = load_vae(vdir);
  if (vae->config().n_f() != cfg.denoiser.n_f || vae->config().n_t() != cfg.denoiser.n_t ||
      vae->config().token_width() != cfg.denoiser.latent_dim) {
    throw Error(ErrorCode::ConfigShapeMismatch, "U-VAE checkpoint latent grid differs from config");
  }
  const auto train = read_normalized(processed_dir(cfg) / "train.csv", cfg.contract);
  const auto windows = make_windows(train, cfg.horizon, cfg.level, cfg.stride);
  const auto docs = daily_for_steps(train, load_daily(prompt_dir(cfg) / "daily"));
  std::vector<conditioning::Document> prompts;
  prompts.reserve(windows.samples.size());
  for (const auto& w : windows.samples) {
    prompts.push_back(window_prompt(docs, w.start_index, cfg.horizon, cfg.prompt_block,
                                    static_cast<std::size_t>(cfg.prompt_item_budget)));
  }
  const fs::path dir = diffusion_dir(cfg);
  const bool has = fs::exists(dir / "manifest.json");
  auto run = train_diffusion_run(cfg, *vae, windows.grids, prompts, resume && has ? dir : fs::path{},
                                 progress);
  save_diffusion(dir, run);
  return run.log;
}

std::vector<fs::path> cmd_generate(const config::RunConfig& cfg, const fs::path& prompts, int k,
                                   const fs::path& out_dir) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "need at least one trajectory");
  auto vae = load_vae(vae_dir(cfg));
  auto diff = load_diffusion(diffusion_dir(cfg));
  sampler::Pipeline p;
  p.vae = vae.get();
  p.denoiser = diff.model.get();
  p.schedule = &diff.schedule;
  p.latent_scale = diff.latent_scale;
  p.dwt.level = vae->config().level;
  p.check();

  std::vector<fs::path> files;
  if (fs::is_directory(prompts)) {
    for (const auto& e : fs::directory_iterator(prompts)) {
      const std::string name = e.path().filename().string();
      if (e.path().extension() != ".json") continue;
      if (name.size() > 12 && name.ends_with(".anchor.json")) continue;
      if (name.size() > 10 && name.ends_with(".meta.json")) continue;
      files.push_back(e.path());
    }
  } else if (fs::exists(prompts)) {
    files.push_back(prompts);
  } else {
    throw Error(ErrorCode::MissingData, prompts.string());
  }
  std::sort(files.begin(), files.end());

  const fs::path out = out_dir.empty() ? generated_dir(cfg) : out_dir;
  fs::create_directories(out / "raw");
  std::vector<fs::path> written;
  for (std::size_t pi = 0; pi < files.size(); ++pi) {
    const auto doc = conditioning::read_document(files[pi].string());
    const auto tokens = conditioning::tokenize(doc, diff.vocab, diff.model->config().max_text);
    const std::string stem = files[pi].stem().string();
    preprocess::NormalizationState anchors;
    const fs::path anchor_file = files[pi].parent_path() / (stem + ".anchor.json");
    if (fs::exists(anchor_file)) {
      anchors = anchors_from_json(checkpoint::read_json(anchor_file));
    } else {
      anchors.anchor_date = doc.span.start;
      anchors.anchor_open = cfg.synthetic.center;
      anchors.anchor_open_interest = cfg.synthetic.open_interest;
    }
    for (int i = 0; i < k; ++i) {
      const auto traj = static_cast<std::uint64_t>(pi) * static_cast<std::uint64_t>(k) +
                        static_cast<std::uint64_t>(i);
      auto g = sampler::generate(p, tokens, cfg.sampling, anchors, traj);
      const std::string name = stem + "__k" + std::to_string(i) + ".csv";
      preprocess::write_series_csv(out / name, g.normalized);
      preprocess::write_records_csv(out / "raw" / name, g.records);
      written.push_back(out / name);
    }
    json meta = {{"prompt", files[pi].filename().string()},
                 {"tokens", tokens},
                 {"trajectories", k},
                 {"sampler", cfg.sampling},
                 {"latent_scale", diff.latent_scale},
                 {"anchors", anchors_to_json(anchors)}};
    checkpoint::write_json(out / (stem + ".meta.json"), meta);
  }
  return written;
}

evalharness::EvalReport cmd_evaluate(const config::RunConfig& cfg, const fs::path& predictions,
                                     const fs::path& truth, const fs::path& out_dir) {
  const fs::path pred = predictions.empty() ? generated_dir(cfg) : predictions;
  const fs::path tru = truth.empty() ? test_dir(cfg) : truth;
  const fs::path out = out_dir.empty() ? fs::path(cfg.paths.output_dir) / "eval" : out_dir;
  auto report = evalharness::evaluate_directories(pred, tru, out / "bands");
  evalharness::write_report(out, report);
  return report;
}

RoundtripReport cmd_roundtrip_check(const config::RunConfig& cfg, const fs::path& records_csv) {
  const auto records = preprocess::read_records_csv(records_csv);
  RoundtripReport r;
  const auto norm = preprocess::normalize(records, cfg.contract);
  const auto back = preprocess::denormalize(norm.series, norm.state);
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = back[i];
    const auto& b = records[i + 1];
    const double pairs[][2] = {{a.open, b.open},     {a.high, b.high},     {a.low, b.low},
                               {a.close, b.close},   {a.settle, b.settle}, {a.value, b.value},
                               {a.volume, b.volume}, {a.open_interest, b.open_interest}};
    for (const auto& pr : pairs) {
      const double err = std::abs(pr[0] - pr[1]) / std::max(1.0, std::abs(pr[1]));
      r.max_normalization_error = std::max(r.max_normalization_error, err);
    }
  }
  for (int h : cfg.horizons) {
    if (h > norm.series.steps()) continue;
    for (int level = 1; level <= 3 && (1 << level) <= h; ++level) {
      signal::DecompositionConfig dwt;
      dwt.level = level;
      for (const auto& w : preprocess::make_windows(norm.series, h, h)) {
        const auto grid = signal::dwt_decompose(w.series, dwt);
        const auto rec = signal::idwt_reconstruct(grid, dwt);
        const double scale = std::max(1.0, w.series.values.cwiseAbs().maxCoeff());
        r.max_wavelet_error =
            std::max(r.max_wavelet_error, (rec.values - w.series.values).cwiseAbs().maxCoeff() / scale);
        for (int c = 0; c < kNumChannels; ++c) {
          double coeff_energy = 0;
          for (const auto& row : signal::native_coefficients(grid, c)) {
            for (double v : row) coeff_energy += v * v;
          }
          const double energy = w.series.values.row(c).squaredNorm();
          r.max_parseval_error = std::max(
              r.max_parseval_error, std::abs(coeff_energy - energy) / std::max(1.0, energy));
        }
        ++r.series_checked;
      }
    }
  }
  return r;
}

// Two-regime conditioning experiment.

double RegimeExperimentResult::cond_mse() const {
  double s = 0;
  for (const auto& r : regimes) s += r.cond_mse;
  return regimes.empty() ? 0 : s / static_cast<double>(regimes.size());
}

double RegimeExperimentResult::null_mse() const {
  double s = 0;
  for (const auto& r : regimes) s += r.null_mse;
  return regimes.empty() ? 0 : s / static_cast<double>(regimes.size());
}

RegimeExperimentResult run_regime_experiment(const RegimeExperimentConfig& ecfg) {
  const auto& cfg = ecfg.run;
  RegimeExperimentResult result;
  const auto corpus = synthetic::generate(cfg.synthetic);
  const auto docs = regime_documents(corpus, cfg.synthetic);
  const auto norm = preprocess::normalize(corpus.records, cfg.contract);
  // normalized step t is record t + 1
  std::vector<conditioning::Document> daily(docs.begin() + 1, docs.end());
  const auto windows = make_windows(norm.series, cfg.horizon, cfg.level, cfg.stride);
  std::vector<conditioning::Document> prompts;
  std::vector<int> regime_of;
  for (const auto& w : windows.samples) {
    prompts.push_back(window_prompt(daily, w.start_index, cfg.horizon, cfg.prompt_block,
                                    static_cast<std::size_t>(cfg.prompt_item_budget)));
    int r = corpus.regime[static_cast<std::size_t>(w.start_index + 1)];
    for (int t = 1; t < cfg.horizon; ++t) {
      if (corpus.regime[static_cast<std::size_t>(w.start_index + 1 + t)] != r) r = -1;
    }
    regime_of.push_back(r);
  }

  auto t0 = std::chrono::steady_clock::now();
  say(ecfg.progress, "training U-VAE on " + std::to_string(windows.grids.size()) + " windows");
  auto vae = train_vae(cfg, windows.grids, {}, ecfg.progress);
  result.vae_seconds = seconds_since(t0);
  result.vae_recon = train::mean_abs_reconstruction(*vae.model, windows.grids);

  t0 = std::chrono::steady_clock::now();
  auto diff = train_diffusion_run(cfg, *vae.model, windows.grids, prompts, {}, ecfg.progress);
  result.diffusion_seconds = seconds_since(t0);

  sampler::Pipeline p;
  p.vae = vae.model.get();
  p.denoiser = diff.model.get();
  p.schedule = &diff.schedule;
  p.latent_scale = diff.latent_scale;
  p.dwt.level = cfg.level;
  p.check();

  t0 = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < cfg.synthetic.regimes.size(); ++r) {
    const auto& regime = cfg.synthetic.regimes[r];
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < regime_of.size(); ++i) {
      if (regime_of[i] == static_cast<int>(r)) members.push_back(i);
    }
    if (members.empty()) throw Error(ErrorCode::MissingData, "no window lies inside regime " + regime.label);
    TimeSeries mean = windows.samples[members.front()].series;
    mean.values.setZero();
    for (auto i : members) mean.values += windows.samples[i].series.values;
    mean.values /= static_cast<double>(members.size());

    RegimeOutcome out;
    out.label = regime.label;
    out.drift_sign = regime.drift > 0 ? 1.0 : regime.drift < 0 ? -1.0 : 0.0;
    int match = 0, null_match = 0;
    for (int d = 0; d < ecfg.draws; ++d) {
      const std::size_t w = members[static_cast<std::size_t>(d) * members.size() /
                                    static_cast<std::size_t>(ecfg.draws)];
      const auto anchors = window_anchors(norm.state, windows.samples[w].start_index);
      const auto tokens = conditioning::tokenize(prompts[w], diff.vocab, diff.model->config().max_text);
      const auto traj = static_cast<std::uint64_t>(r * 100000 + static_cast<std::size_t>(d));
      auto cond = sampler::generate(p, tokens, cfg.sampling, anchors, traj);
      auto null = sampler::generate(p, diff.model->null_condition(), cfg.sampling, anchors, traj);
      auto close_slope = [](const sampler::Generated& g) {
        std::vector<double> close;
        for (const auto& rec : g.records) close.push_back(rec.close);
        return synthetic::trend_slope(close);
      };
      const double sc = close_slope(cond);
      const double sn = close_slope(null);
      if ((sc > 0 ? 1.0 : sc < 0 ? -1.0 : 0.0) == out.drift_sign) ++match;
      if ((sn > 0 ? 1.0 : sn < 0 ? -1.0 : 0.0) == out.drift_sign) ++null_match;
      out.cond_mse += evalharness::score(cond.normalized, mean).mse / ecfg.draws;
      out.null_mse += evalharness::score(null.normalized, mean).mse / ecfg.draws;
    }
    out.sign_match = static_cast<double>(match) / ecfg.draws;
    out.null_sign_match = static_cast<double>(null_match) / ecfg.draws;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "regime %s: sign match %.2f (null %.2f), mse cond %.4f null %.4f",
                  out.label.c_str(), out.sign_match, out.null_sign_match, out.cond_mse, out.null_mse);
    say(ecfg.progress, buf);
    result.regimes.push_back(out);
  }
  result.sampling_seconds = seconds_since(t0);
  return result;
}

}  // namespace tfcodit::pipeline
