#include "racg/execute.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "racg/config.hpp"
#include "racg/errors.hpp"

namespace racg {

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Pass: return "Pass";
    case Verdict::CompileError: return "CompileError";
    case Verdict::RuntimeError: return "RuntimeError";
    case Verdict::TestFailure: return "TestFailure";
    case Verdict::Timeout: return "Timeout";
    case Verdict::SandboxError: return "SandboxError";
  }
  return "SandboxError";
}

Verdict verdict_from_string(std::string_view name) {
  for (Verdict v : {Verdict::Pass, Verdict::CompileError, Verdict::RuntimeError,
                    Verdict::TestFailure, Verdict::Timeout, Verdict::SandboxError}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown verdict: " + std::string(name));
}

// --- Runners ---------------------------------------------------------------

RunnerRegistry RunnerRegistry::defaults() {
  using L = Language;
  RunnerRegistry reg;
  auto add = [&](L lang, std::optional<std::string> compile, std::string run, std::string file,
                 std::vector<std::string> markers) {
    LanguageRunner r;
    r.language = lang;
    r.compile_cmd = std::move(compile);
    r.run_cmd = std::move(run);
    r.file_name = std::move(file);
    r.failure_markers = std::move(markers);
    reg.set(std::move(r));
  };
  add(L::Python, "python3 -m py_compile {file}", "python3 {file}", "main.py", {"AssertionError"});
  add(L::JavaScript, "node --check {file}", "node {file}", "main.js",
      {"AssertionError", "Assertion failed"});
  add(L::TypeScript, "tsc --target es2020 --module commonjs --skipLibCheck --outDir {workdir} {file}",
      "node {workdir}/main.js", "main.ts", {"AssertionError", "Assertion failed"});
  add(L::Cpp, "g++ -std=c++17 -O1 -o {workdir}/main {file}", "{workdir}/main", "main.cpp",
      {"Assertion", "assertion"});
  add(L::Java, "javac -d {workdir} {file}", "java -ea -cp {workdir} Main", "Main.java",
      {"AssertionError"});
  add(L::CSharp, "mcs -out:{workdir}/main.exe {file}", "mono {workdir}/main.exe", "Program.cs",
      {"Assertion failed", "AssertionException"});
  add(L::Go, "go build -o {workdir}/main {files}", "{workdir}/main", "solution.go",
      {"assertion failed"});
  add(L::Kotlin, "kotlinc {file} -include-runtime -d {workdir}/main.jar",
      "java -ea -jar {workdir}/main.jar", "Main.kt", {"AssertionError", "Assertion failed"});
  add(L::Scala, "scalac -d {workdir} {file}", "scala -cp {workdir} Main", "Main.scala",
      {"AssertionError", "assertion failed"});
  add(L::Swift, "swiftc -o {workdir}/main {file}", "{workdir}/main", "main.swift",
      {"Assertion failed", "Fatal error"});
  add(L::Php, "php -l {file}", "php {file}", "main.php", {"AssertionError", "Assertion failed"});
  add(L::Perl, "perl -c {file}", "perl {file}", "main.pl", {"Assertion failed"});
  add(L::Ruby, "ruby -c {file}", "ruby {file}", "main.rb", {"Assertion failed", "AssertionError"});

  reg.runners_[L::Go].harness_file_name = "main.go";
  reg.runners_[L::Kotlin].compile_timeout_s = 120.0;
  reg.runners_[L::Scala].compile_timeout_s = 120.0;
  return reg;
}

RunnerRegistry RunnerRegistry::from_file(const std::filesystem::path& path) {
  RunnerRegistry reg = defaults();
  const ConfigDocument doc = ConfigDocument::load(path);
  for (const auto& name : doc.table_names()) {
    const auto lang = parse_language(name);
    if (!lang) throw ConfigError("unknown language table [" + name + "] in " + path.string());
    LanguageRunner r = reg.runners_.contains(*lang) ? reg.runners_[*lang] : LanguageRunner{};
    r.language = *lang;
    if (auto v = doc.get_string(name, "compile_cmd")) {
      r.compile_cmd = v->empty() ? std::nullopt : std::optional<std::string>(*v);
    }
    if (auto v = doc.get_string(name, "run_cmd")) r.run_cmd = *v;
    if (auto v = doc.get_string(name, "file_name")) r.file_name = *v;
    if (auto v = doc.get_string(name, "harness_file_name")) {
      r.harness_file_name = v->empty() ? std::nullopt : std::optional<std::string>(*v);
    }
    if (auto v = doc.get_number(name, "timeout_s")) r.timeout_s = *v;
    if (auto v = doc.get_number(name, "compile_timeout_s")) r.compile_timeout_s = *v;
    if (doc.get(name, "failure_markers") != nullptr) {
      r.failure_markers = doc.get_strings(name, "failure_markers");
    }
    if (r.run_cmd.empty()) throw ConfigError("runner for " + name + " has an empty run_cmd");
    if (r.file_name.empty()) throw ConfigError("runner for " + name + " has no file_name");
    reg.set(std::move(r));
  }
  return reg;
}

const LanguageRunner* RunnerRegistry::find(Language language) const {
  auto it = runners_.find(language);
  return it == runners_.end() ? nullptr : &it->second;
}

void RunnerRegistry::set(LanguageRunner runner) {
  const Language lang = runner.language;
  runners_[lang] = std::move(runner);
}

namespace {

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

bool executable_on_path(const std::string& program) {
  if (program.find('/') != std::string::npos) return ::access(program.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (path == nullptr) return false;
  std::string_view rest = path;
  while (!rest.empty()) {
    const std::size_t colon = rest.find(':');
    std::string dir(rest.substr(0, colon));
    rest = colon == std::string_view::npos ? std::string_view{} : rest.substr(colon + 1);
    if (dir.empty()) dir = ".";
    const std::string candidate = dir + "/" + program;
    struct stat st {};
    if (::stat(candidate.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
        ::access(candidate.c_str(), X_OK) == 0) {
      return true;
    }
  }
  return false;
}

/// The external tool a command template starts with, or "" when the command
/// runs a program built inside the workdir.
std::string tool_of(const std::string& cmd) {
  const auto words = split_words(cmd);
  if (words.empty()) return "";
  if (words.front().find('{') != std::string::npos) return "";
  return words.front();
}

}  // namespace

bool RunnerRegistry::toolchain_available(Language language) const {
  const LanguageRunner* r = find(language);
  if (r == nullptr) return false;
  for (const std::string* cmd : {r->compile_cmd ? &*r->compile_cmd : nullptr, &r->run_cmd}) {
    if (cmd == nullptr) continue;
    const std::string tool = tool_of(*cmd);
    if (!tool.empty() && !executable_on_path(tool)) return false;
  }
  return true;
}

std::map<Language, bool> RunnerRegistry::probe() const {
  std::map<Language, bool> out;
  for (const auto& [lang, _] : runners_) out[lang] = toolchain_available(lang);
  return out;
}

// --- Program layout --------------------------------------------------------

namespace {

bool starts_with_word(std::string_view line, std::string_view word) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (line.substr(i, word.size()) != word) return false;
  return i + word.size() < line.size() &&
         (line[i + word.size()] == ' ' || line[i + word.size()] == '\t');
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) out.push_back(text.substr(start));
      break;
    }
    out.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

/// Moves `keyword` lines (imports, usings) of both parts to the top, keeping
/// the first occurrence of each.
std::string hoist(std::string_view code, std::string_view tests,
                  std::initializer_list<std::string_view> keywords,
                  std::string (*rewrite)(std::string_view) = nullptr) {
  std::vector<std::string> header;
  std::set<std::string> seen;
  std::string body;
  for (std::string_view part : {code, tests}) {
    for (std::string_view line : lines_of(part)) {
      const bool hoisted = std::any_of(keywords.begin(), keywords.end(),
                                       [&](std::string_view kw) { return starts_with_word(line, kw); });
      if (hoisted) {
        std::string l(line);
        while (!l.empty() && (l.back() == ' ' || l.back() == '\r')) l.pop_back();
        if (seen.insert(l).second) header.push_back(l);
        continue;
      }
      body += rewrite != nullptr ? rewrite(line) : std::string(line);
      body += '\n';
    }
    body += '\n';
  }
  std::string out;
  for (const auto& h : header) out += h + '\n';
  if (!header.empty()) out += '\n';
  return out + body;
}

/// Java allows one public top-level type per file; demote all but Main.
std::string demote_public_class(std::string_view line) {
  std::string l(line);
  if (l.rfind("public ", 0) == 0) {
    const std::string rest = l.substr(7);
    const bool type_decl = rest.rfind("class ", 0) == 0 || rest.rfind("final class ", 0) == 0 ||
                           rest.rfind("interface ", 0) == 0 || rest.rfind("enum ", 0) == 0 ||
                           rest.rfind("record ", 0) == 0 || rest.rfind("abstract class ", 0) == 0;
    if (type_decl && rest.find("class Main") == std::string::npos) return rest;
  }
  return l;
}

std::string strip_php_open(std::string_view text) {
  std::string s(text);
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  if (s.compare(i, 5, "<?php") == 0) s.erase(0, i + 5);
  std::size_t e = s.size();
  while (e > 0 && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (e >= 2 && s.compare(e - 2, 2, "?>") == 0) s.erase(e - 2);
  return s;
}

std::string with_package_main(std::string_view text) {
  for (std::string_view line : lines_of(text)) {
    if (starts_with_word(line, "package")) return std::string(text);
  }
  return "package main\n\n" + std::string(text);
}

}  // namespace

SourceFiles assemble_program(std::string_view code, const CodeInstance& instance,
                             const LanguageRunner& runner) {
  const std::string_view tests = instance.test_cases;
  SourceFiles files;
  if (runner.harness_file_name) {
    std::string main = std::string(code);
    std::string harness = std::string(tests);
    if (instance.language == Language::Go) {
      main = with_package_main(main);
      harness = with_package_main(harness);
    }
    files.push_back({runner.file_name, main});
    files.push_back({*runner.harness_file_name, harness});
    return files;
  }
  std::string content;
  switch (instance.language) {
    case Language::Java:
      content = hoist(code, tests, {"import"}, demote_public_class);
      break;
    case Language::CSharp:
      content = hoist(code, tests, {"using"});
      break;
    case Language::Kotlin:
    case Language::Scala:
      content = hoist(code, tests, {"import"});
      break;
    case Language::Go:
      content = with_package_main(hoist(code, tests, {"package", "import"}));
      break;
    case Language::Php:
      content = "<?php\n" + strip_php_open(code) + "\n" + strip_php_open(tests) + "\n";
      break;
    default:
      content = std::string(code) + "\n" + std::string(tests);
      if (content.empty() || content.back() != '\n') content += '\n';
      break;
  }
  files.push_back({runner.file_name, std::move(content)});
  return files;
}

// --- Sandboxed execution ---------------------------------------------------

namespace {

struct ProcessOutcome {
  bool launched = false;
  bool timed_out = false;
  int exit_code = -1;
  int signal = 0;
  std::string out_tail;
  std::string err_tail;
};

void append_tail(std::string& buf, const char* data, std::size_t n, std::size_t cap) {
  buf.append(data, n);
  if (buf.size() > cap) buf.erase(0, buf.size() - cap);
}

ProcessOutcome run_process(const std::vector<std::string>& args, const std::filesystem::path& cwd,
                           double timeout_s, std::size_t capture) {
  ProcessOutcome outcome;
  if (args.empty()) return outcome;
  std::vector<char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const std::string dir = cwd.string();

  int out_pipe[2];
  int err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) return outcome;
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    return outcome;
  }
  const rlim_t cpu = static_cast<rlim_t>(std::ceil(timeout_s)) + 1;

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    return outcome;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::unshare(CLONE_NEWNET);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    if (::chdir(dir.c_str()) != 0) ::_exit(126);
    struct rlimit lim {};
    lim.rlim_cur = lim.rlim_max = 0;
    ::setrlimit(RLIMIT_CORE, &lim);
    lim.rlim_cur = lim.rlim_max = 256ULL << 20;
    ::setrlimit(RLIMIT_FSIZE, &lim);
    lim.rlim_cur = lim.rlim_max = cpu;
    ::setrlimit(RLIMIT_CPU, &lim);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  outcome.launched = true;

  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(timeout_s));
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  std::string* sinks[2] = {&outcome.out_tail, &outcome.err_tail};
  int open_fds = 2;
  char buf[4096];
  while (open_fds > 0) {
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      outcome.timed_out = true;
      break;
    }
    const int ready = ::poll(fds, 2, static_cast<int>(std::min<long long>(remaining, 100)));
    if (ready < 0 && errno != EINTR) break;
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
      const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        append_tail(*sinks[i], buf, static_cast<std::size_t>(n), capture);
      } else if (n == 0 || errno != EINTR) {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }

  int status = 0;
  bool reaped = false;
  while (!outcome.timed_out) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) {
      reaped = true;
      break;
    }
    if (Clock::now() >= deadline) {
      outcome.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ::kill(-pid, SIGKILL);
  if (!reaped) ::waitpid(pid, &status, 0);
  for (auto& fd : fds) {
    if (fd.fd >= 0) ::close(fd.fd);
  }
  if (WIFEXITED(status)) outcome.exit_code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) {
    outcome.signal = WTERMSIG(status);
    // RLIMIT_CPU expiry is a timeout too.
    if (outcome.signal == SIGXCPU) outcome.timed_out = true;
  }
  return outcome;
}

std::vector<std::string> expand(const std::string& cmd, const std::filesystem::path& workdir,
                                const SourceFiles& files) {
  const std::string wd = workdir.string();
  const std::string primary = (workdir / files.front().name).string();
  const std::string stem = std::filesystem::path(files.front().name).stem().string();
  std::vector<std::string> out;
  for (std::string word : split_words(cmd)) {
    if (word == "{files}") {
      for (const auto& f : files) out.push_back((workdir / f.name).string());
      continue;
    }
    for (auto [key, value] : {std::pair<std::string_view, const std::string&>{"{workdir}", wd},
                              {"{file}", primary},
                              {"{stem}", stem}}) {
      std::size_t pos;
      while ((pos = word.find(key)) != std::string::npos) word.replace(pos, key.size(), value);
    }
    out.push_back(std::move(word));
  }
  return out;
}

bool contains_marker(const ProcessOutcome& p, const std::vector<std::string>& markers) {
  return std::any_of(markers.begin(), markers.end(), [&](const std::string& m) {
    return p.out_tail.find(m) != std::string::npos || p.err_tail.find(m) != std::string::npos;
  });
}

class Workdir {
 public:
  Workdir(const std::filesystem::path& root, bool keep) : keep_(keep) {
    std::string tmpl = (root / "racg-run-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) != nullptr) path_ = tmpl;
  }
  ~Workdir() {
    if (!path_.empty() && !keep_) {
      std::error_code ec;
      std::filesystem::remove_all(path_, ec);
    }
  }
  Workdir(const Workdir&) = delete;
  Workdir& operator=(const Workdir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool keep_;
};

}  // namespace

ExecutionResult run_tests(const SourceFiles& files, const LanguageRunner& runner,
                          const SandboxOptions& options) {
  ExecutionResult result;
  const auto started = std::chrono::steady_clock::now();
  auto finish = [&](Verdict v) {
    result.verdict = v;
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
  };
  if (files.empty()) {
    result.stderr_tail = "no source files";
    return finish(Verdict::SandboxError);
  }
  for (const std::string* cmd :
       {runner.compile_cmd ? &*runner.compile_cmd : nullptr, &runner.run_cmd}) {
    if (cmd == nullptr) continue;
    const std::string tool = tool_of(*cmd);
    if (!tool.empty() && !executable_on_path(tool)) {
      result.stderr_tail = "toolchain not found: " + tool;
      return finish(Verdict::SandboxError);
    }
  }
  Workdir workdir(options.scratch_root, options.keep_workdir);
  if (workdir.path().empty()) {
    result.stderr_tail = "cannot create workdir under " + options.scratch_root.string();
    return finish(Verdict::SandboxError);
  }
  for (const auto& f : files) {
    std::ofstream out(workdir.path() / f.name, std::ios::binary);
    out << f.content;
    if (!out) {
      result.stderr_tail = "cannot write " + f.name;
      return finish(Verdict::SandboxError);
    }
  }

  if (runner.compile_cmd) {
    const ProcessOutcome c = run_process(expand(*runner.compile_cmd, workdir.path(), files),
                                         workdir.path(), runner.compile_timeout_s,
                                         options.capture_bytes);
    result.stdout_tail = c.out_tail;
    result.stderr_tail = c.err_tail;
    if (!c.launched || c.exit_code == 127) return finish(Verdict::SandboxError);
    if (c.timed_out) return finish(Verdict::Timeout);
    if (c.exit_code != 0) return finish(Verdict::CompileError);
  }

  const ProcessOutcome r = run_process(expand(runner.run_cmd, workdir.path(), files),
                                       workdir.path(), runner.timeout_s, options.capture_bytes);
  result.stdout_tail = r.out_tail;
  result.stderr_tail = r.err_tail;
  if (!r.launched) return finish(Verdict::SandboxError);
  if (r.timed_out) return finish(Verdict::Timeout);
  if (r.signal == 0 && r.exit_code == 0) return finish(Verdict::Pass);
  return finish(contains_marker(r, runner.failure_markers) ? Verdict::TestFailure
                                                          : Verdict::RuntimeError);
}

double pass_at_k(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n || k < 1 || k > n) {
    throw DomainError("pass_at_k requires 0 <= c <= n and 1 <= k <= n (n=" + std::to_string(n) +
                      ", c=" + std::to_string(c) + ", k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - miss;
}

LocalExecutor::LocalExecutor(RunnerRegistry registry, SandboxOptions options)
    : registry_(std::move(registry)), options_(std::move(options)) {}

ExecutionResult LocalExecutor::execute(std::string_view code, const CodeInstance& instance) {
  const LanguageRunner* runner = registry_.find(instance.language);
  if (runner == nullptr || !registry_.toolchain_available(instance.language)) {
    throw SandboxUnavailable("no toolchain for " + std::string(display_name(instance.language)));
  }
  return run_tests(assemble_program(code, instance, *runner), *runner, options_);
}

void write_execution_log(std::ostream& out, std::span<const ExecutionLogEntry> entries) {
  for (const auto& e : entries) {
    nlohmann::json j = {{"task_id", e.task_id},
                        {"language", std::string(to_string(e.language))},
                        {"verdict", std::string(to_string(e.verdict))},
                        {"wall_time", e.wall_time_s}};
    out << j.dump() << '\n';
  }
}

}  // namespace racg
