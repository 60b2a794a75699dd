use super::freeze::FreezeSchedule;
use super::param::ParamStore;

/// Marks every parameter trainable or frozen per `schedule`.
pub fn apply_schedule(store: &mut ParamStore, schedule: &FreezeSchedule) {
    for p in store.iter_mut() {
        p.trainable = schedule.is_trainable(&p.name);
    }
}

/// Plain SGD: `value -= lr * grad` for parameters the schedule lets train.
/// Frozen parameters are not touched. All gradients are cleared afterwards.
pub fn sgd_step(store: &mut ParamStore, lr: f64, schedule: &FreezeSchedule) {
    for p in store.iter_mut() {
        p.trainable = schedule.is_trainable(&p.name);
        if p.trainable {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *v -= lr * g;
            }
        }
        p.grad.fill(0.0);
    }
}
