use std::fmt::Display;

/// Process exit codes. Stable: scripts depend on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Validation = 1,
    IoOrSchema = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub error: anyhow::Error,
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait OrCode<T> {
    fn or_code(self, code: Code) -> CmdResult<T>;
    fn or_code_with<C: Display + Send + Sync + 'static>(
        self,
        code: Code,
        ctx: impl FnOnce() -> C,
    ) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrCode<T> for Result<T, E> {
    fn or_code(self, code: Code) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }

    fn or_code_with<C: Display + Send + Sync + 'static>(
        self,
        code: Code,
        ctx: impl FnOnce() -> C,
    ) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into().context(ctx()),
        })
    }
}

pub fn fail<T>(code: Code, msg: impl Display) -> CmdResult<T> {
    Err(Failure {
        code,
        error: anyhow::anyhow!("{msg}"),
    })
}
