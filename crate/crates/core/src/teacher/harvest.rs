use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::Serialize;

use super::{build_teacher_prompt, HarvestCache, Teacher, TeacherError};
use crate::corpus::CodeSample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    /// Pause after the n-th failed attempt; the last entry repeats.
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: vec![Duration::from_secs(1), Duration::from_secs(4), Duration::from_secs(16)],
        }
    }
}

impl RetryPolicy {
    fn pause(&self, failed_attempt: usize) -> Duration {
        self.backoff
            .get(failed_attempt - 1)
            .or(self.backoff.last())
            .copied()
            .unwrap_or_default()
    }
}

pub struct HarvestOptions<'a> {
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    pub sleep: &'a (dyn Fn(Duration) + Sync),
}

impl Default for HarvestOptions<'_> {
    fn default() -> Self {
        Self {
            max_parallel: 4,
            retry: RetryPolicy::default(),
            sleep: &std::thread::sleep,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HarvestReport {
    pub from_cache: usize,
    pub fresh: usize,
    pub calls: usize,
    /// `(sample id, last error)` for samples left without a summary.
    pub failed: Vec<(String, String)>,
}

fn attempt(teacher: &dyn Teacher, prompt: &str, opts: &HarvestOptions, calls: &AtomicUsize) -> Result<String, TeacherError> {
    let mut n = 0;
    loop {
        n += 1;
        calls.fetch_add(1, Ordering::SeqCst);
        match teacher.complete(prompt) {
            Ok(s) => return Ok(s),
            Err(e) if e.is_retryable() && n < opts.retry.max_attempts => (opts.sleep)(opts.retry.pause(n)),
            Err(e) => return Err(e),
        }
    }
}

/// Fills every sample's teacher summary from the cache or a fresh call.
/// Fresh answers are written to the cache before the corpus is returned;
/// the only fatal error is a failed cache write.
pub fn harvest(
    corpus: &[CodeSample],
    teacher: &dyn Teacher,
    cache: &mut HarvestCache,
    opts: &HarvestOptions,
) -> std::io::Result<(Vec<CodeSample>, HarvestReport)> {
    let mut report = HarvestReport::default();
    let mut out = corpus.to_vec();
    let mut pending = Vec::new();
    for (i, s) in out.iter_mut().enumerate() {
        match cache.get(&s.id) {
            Some(e) => {
                s.teacher = Some(e.summary.clone());
                report.from_cache += 1;
            }
            None => pending.push(i),
        }
    }

    let next = AtomicUsize::new(0);
    let calls = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = opts.max_parallel.max(1).min(pending.len().max(1));
    let mut outcomes: HashMap<usize, Result<String, TeacherError>> = HashMap::new();
    let write_result = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<String, TeacherError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, calls, abort, pending, out) = (&next, &calls, &abort, &pending, &out);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { break };
                let result = build_teacher_prompt(&out[i].code).and_then(|p| attempt(teacher, &p, opts, calls));
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            if let Ok(summary) = &result {
                if let Err(e) = cache.insert(&out[i].id, summary, teacher.model_name()) {
                    abort.store(true, Ordering::SeqCst);
                    return Err(e);
                }
            }
            outcomes.insert(i, result);
        }
        Ok(())
    });
    write_result?;

    for &i in &pending {
        match outcomes.remove(&i) {
            Some(Ok(_)) => {
                out[i].teacher = cache.get(&out[i].id).map(|e| e.summary.clone());
                report.fresh += 1;
            }
            Some(Err(e)) => report.failed.push((out[i].id.clone(), e.to_string())),
            None => report.failed.push((out[i].id.clone(), "not attempted".into())),
        }
    }
    report.calls = calls.load(Ordering::SeqCst);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::MockTeacher;
    use std::sync::Mutex;

    fn corpus(n: usize) -> Vec<CodeSample> {
        (0..n)
            .map(|i| CodeSample::new(format!("s{i}"), format!("public int getValue{i}() {{ return v{i}; }}")))
            .collect()
    }

    fn no_sleep() -> HarvestOptions<'static> {
        HarvestOptions {
            sleep: &|_| {},
            ..Default::default()
        }
    }

    #[test]
    fn cold_then_warm_cache() {
        let c = corpus(5);
        let teacher = MockTeacher::new();
        let mut cache = HarvestCache::in_memory();
        let (first, r1) = harvest(&c, &teacher, &mut cache, &no_sleep()).unwrap();
        assert_eq!((r1.calls, r1.fresh, cache.len()), (5, 5, 5));
        let (second, r2) = harvest(&c, &teacher, &mut cache, &no_sleep()).unwrap();
        assert_eq!((r2.calls, r2.from_cache), (0, 5));
        assert_eq!(first, second);
        assert_eq!(teacher.calls(), 5);
    }

    #[test]
    fn permanent_failure_is_reported_and_run_continues() {
        let c = corpus(5);
        let teacher = MockTeacher::new().failing_on([c[2].code.clone()]);
        let mut cache = HarvestCache::in_memory();
        let (out, r) = harvest(&c, &teacher, &mut cache, &no_sleep()).unwrap();
        assert_eq!(out.iter().filter(|s| s.teacher.is_some()).count(), 4);
        assert_eq!(r.failed.len(), 1);
        assert_eq!(r.failed[0].0, "s2");
        // three attempts for the failing sample, one for each other
        assert_eq!(r.calls, 4 + 3);
    }

    #[test]
    fn backoff_schedule_is_followed() {
        let c = corpus(1);
        let teacher = MockTeacher::new().failing_on([c[0].code.clone()]);
        let slept = Mutex::new(Vec::new());
        let sleep = |d: Duration| slept.lock().unwrap().push(d);
        let opts = HarvestOptions {
            max_parallel: 1,
            retry: RetryPolicy::default(),
            sleep: &sleep,
        };
        harvest(&c, &teacher, &mut HarvestCache::in_memory(), &opts).unwrap();
        assert_eq!(*slept.lock().unwrap(), [Duration::from_secs(1), Duration::from_secs(4)]);
    }

    #[test]
    fn rate_limit_is_retried() {
        let c = corpus(2);
        let teacher = MockTeacher::new().rate_limited(&c[1].code, 2);
        let (out, r) = harvest(&c, &teacher, &mut HarvestCache::in_memory(), &no_sleep()).unwrap();
        assert!(r.failed.is_empty());
        assert!(out.iter().all(|s| s.teacher.is_some()));
        assert_eq!(r.calls, 4);
    }

    #[test]
    fn parallelism_is_bounded() {
        let c = corpus(24);
        let teacher = MockTeacher::new().with_latency(Duration::from_millis(5));
        let opts = HarvestOptions {
            max_parallel: 3,
            ..no_sleep()
        };
        harvest(&c, &teacher, &mut HarvestCache::in_memory(), &opts).unwrap();
        assert!(teacher.max_in_flight() <= 3);
        assert!(teacher.max_in_flight() >= 1);
    }

    #[test]
    fn empty_code_fails_without_a_call() {
        let mut c = corpus(1);
        c[0].code.clear();
        let teacher = MockTeacher::new();
        let (_, r) = harvest(&c, &teacher, &mut HarvestCache::in_memory(), &no_sleep()).unwrap();
        assert_eq!(r.failed.len(), 1);
        assert_eq!(teacher.calls(), 0);
    }

    #[test]
    fn cache_write_failure_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut cache = HarvestCache::open(&path).unwrap();
        // swap the append handle for a read-only one
        cache.break_writes_for_test(&path);
        let err = harvest(&corpus(3), &MockTeacher::new(), &mut cache, &no_sleep());
        assert!(err.is_err());
    }
}
